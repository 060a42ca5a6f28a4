"""
Per-utterance modality encoders: a bidirectional GRU over the text features of
each dialogue and one linear layer per acoustic/visual stream, all landing in
the shared model dimension D.
"""
import numpy as np

from . import autodiff as ad
from .exceptions import ContractViolation
from .layers import Block, Linear


class GRUCell(Block):
    def __init__(self, name: str, input_size: int, hidden_size: int, rng: np.random.Generator):
        self.input_size = input_size
        self.hidden_size = hidden_size
        self.update_in = Linear(f"{name}.update_in", input_size, hidden_size, rng)
        self.update_hidden = Linear(f"{name}.update_hidden", hidden_size, hidden_size, rng, bias=False)
        self.reset_in = Linear(f"{name}.reset_in", input_size, hidden_size, rng)
        self.reset_hidden = Linear(f"{name}.reset_hidden", hidden_size, hidden_size, rng, bias=False)
        self.candidate_in = Linear(f"{name}.candidate_in", input_size, hidden_size, rng)
        self.candidate_hidden = Linear(f"{name}.candidate_hidden", hidden_size, hidden_size, rng, bias=False)

    def __call__(self, x: ad.Tensor, h: ad.Tensor) -> ad.Tensor:
        z = ad.sigmoid(ad.add(self.update_in(x), self.update_hidden(h)))
        r = ad.sigmoid(ad.add(self.reset_in(x), self.reset_hidden(h)))
        candidate = ad.tanh(ad.add(self.candidate_in(x), self.candidate_hidden(ad.hadamard(r, h))))
        # (1 - z) * h + z * candidate
        return ad.add(h, ad.hadamard(z, ad.sub(candidate, h)))


class TextEncoder(Block):
    """Bi-GRU per dialogue followed by a 2h -> D projection."""

    def __init__(self, input_size: int, hidden_size: int, model_dim: int, rng: np.random.Generator):
        self.forward_cell = GRUCell("text.gru_forward", input_size, hidden_size, rng)
        self.backward_cell = GRUCell("text.gru_backward", input_size, hidden_size, rng)
        self.proj = Linear("text.proj", 2 * hidden_size, model_dim, rng)

    def encode(self, sequence) -> ad.Tensor:
        sequence = ad.as_tensor(sequence)
        return self.encode_batch(sequence, [sequence.shape[0]])

    def encode_batch(self, features, lengths) -> ad.Tensor:
        """
        ``features`` stacks the utterances of several dialogues in order;
        ``lengths`` gives each dialogue's utterance count. Recurrences never
        cross dialogue boundaries.
        """
        features = ad.as_tensor(features)
        lengths = np.asarray(lengths, dtype=np.int64)
        if lengths.size == 0 or np.any(lengths < 1):
            raise ContractViolation("encode_text: every dialogue needs at least one utterance")
        if features.ndim != 2 or features.shape[0] != lengths.sum():
            raise ContractViolation(
                f"encode_text: {features.shape} features do not match {int(lengths.sum())} utterances"
            )
        if features.shape[1] != self.forward_cell.input_size:
            raise ContractViolation(
                f"encode_text: expected {self.forward_cell.input_size} text dims, got {features.shape[1]}"
            )

        offsets = np.concatenate([[0], np.cumsum(lengths)[:-1]])
        forward_states = self._run(self.forward_cell, features, offsets, lengths, reverse=False)
        backward_states = self._run(self.backward_cell, features, offsets, lengths, reverse=True)

        batch = lengths.size
        dialogue = np.repeat(np.arange(batch), lengths)
        position = np.arange(features.shape[0]) - offsets[dialogue]
        forward_rows = position * batch + dialogue
        backward_rows = (lengths[dialogue] - 1 - position) * batch + dialogue
        hidden = ad.concat_lastdim([
            ad.take_rows(forward_states, forward_rows),
            ad.take_rows(backward_states, backward_rows),
        ])
        return self.proj(hidden)

    @staticmethod
    def _run(cell: GRUCell, features: ad.Tensor, offsets, lengths, reverse: bool) -> ad.Tensor:
        batch = lengths.size
        h = ad.Tensor(np.zeros((batch, cell.hidden_size)))
        states = []
        for t in range(int(lengths.max())):
            active = t < lengths
            step = lengths - 1 - t if reverse else np.full(batch, t)
            rows = np.where(active, offsets + step, 0)
            candidate = cell(ad.take_rows(features, rows), h)
            if active.all():
                h = candidate
            else:
                # finished dialogues keep their last state
                h = ad.add(h, ad.scale_rows(ad.sub(candidate, h), ad.Tensor(active.astype(np.float64))))
            states.append(h)
        return ad.concat_rows(states)


def encode_audio_visual(features, proj: Linear) -> ad.Tensor:
    features = ad.as_tensor(features)
    if features.ndim != 2 or features.shape[1] != proj.in_features:
        raise ContractViolation(
            f"encode_audio_visual: expected (T, {proj.in_features}) features, got {features.shape}"
        )
    return proj(features)


class ModalityEncoder(Block):
    def __init__(self, text_dim: int, audio_dim: int, visual_dim: int, hidden_size: int,
                 model_dim: int, rng: np.random.Generator):
        self.text = TextEncoder(text_dim, hidden_size, model_dim, rng)
        self.audio = Linear("audio.proj", audio_dim, model_dim, rng)
        self.visual = Linear("visual.proj", visual_dim, model_dim, rng)
        outputs = {self.text.proj.out_features, self.audio.out_features, self.visual.out_features}
        if len(outputs) != 1:
            raise ContractViolation(f"modality encoders disagree on the model dimension: {outputs}")
        self.model_dim = model_dim

    def __call__(self, text, audio, visual, lengths):
        return (
            self.text.encode_batch(text, lengths),
            encode_audio_visual(audio, self.audio),
            encode_audio_visual(visual, self.visual),
        )
