"""
End-to-end training and evaluation.

Per epoch the source dialogues are shuffled and paired with target training
dialogues into mixed batches. Every batch runs the adversarial alignment
step, the branch coupling step and the classification step on source
labels, in that order. After the last batch the EMA record of source
predictions is refreshed and the model is evaluated on the held-out target
dialogues.
"""
import logging
import time
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .alignment import AlignmentOptimizers, alternate_step
from .config import TrainConfig
from .coupling import CouplingOptimizers, alternate_branch_update
from .exceptions import ContractViolation
from .graphs import build_structure
from .metrics import MetricsReport, branch_agreement, build_report, memorization_rate
from .model import DgdaModel, DomainBatch, MixedBatch, make_domain_batch
from .robust import EmaTracker, cls_loss, update_ema
from .synth import DomainDataset, generate_pair, inject_label_noise, read_features

logger = logging.getLogger(__name__)

SOURCE, TARGET = 0, 1


def structure_seed(seed: int, domain: int, dialogue: int) -> int:
    return int(np.random.SeedSequence([seed, domain, dialogue]).generate_state(1)[0])


@dataclass
class PreparedDomain:
    """A dataset with its graph structures built once for the whole run."""

    dataset: DomainDataset
    structures: tuple
    features: tuple  # label-free dialogue views

    def __len__(self) -> int:
        return len(self.dataset)

    def batch(self, indices) -> DomainBatch:
        offsets = self.dataset.offsets
        ids = np.concatenate([np.arange(offsets[i], offsets[i + 1]) for i in indices])
        return make_domain_batch([self.features[i] for i in indices], [self.structures[i] for i in indices], ids)


def prepare_domain(dataset: DomainDataset, config: TrainConfig, domain: int) -> PreparedDomain:
    structures = tuple(
        build_structure(
            d.speakers,
            config.context_window,
            config.max_path_length,
            config.max_paths,
            structure_seed(config.seed, domain, i),
            config.paths_cross_modal,
        )
        for i, d in enumerate(dataset.dialogues)
    )
    return PreparedDomain(dataset=dataset, structures=structures, features=dataset.unlabeled())


def split_target(num_dialogues: int, eval_fraction: float, seed: int):
    """Seeded (train, eval) dialogue indices; both sides keep at least one dialogue."""
    if num_dialogues < 2:
        raise ContractViolation(f"split_target: need at least 2 target dialogues, got {num_dialogues}")
    order = np.random.default_rng(seed).permutation(num_dialogues)
    n_eval = min(max(1, int(round(eval_fraction * num_dialogues))), num_dialogues - 1)
    return np.sort(order[n_eval:]), np.sort(order[:n_eval])


def load_domains(config: TrainConfig):
    """Source (with injected label noise) and target datasets for a run."""
    if config.source_path:
        source, target = read_features(config.source_path), read_features(config.target_path)
    else:
        source, target = generate_pair(config.synth)
    if source.domain_tag != "source" or target.domain_tag != "target":
        raise ContractViolation(
            f"load_domains: expected source/target files, got {source.domain_tag}/{target.domain_tag}"
        )
    if source.dims != target.dims or source.num_classes != target.num_classes:
        raise ContractViolation("load_domains: source and target disagree on dimensions or class count")
    if source.noise_mask.any():
        logger.info("source already carries %d flipped labels; no further noise injected",
                    int(source.noise_mask.sum()))
    else:
        source = inject_label_noise(source, config.noise_rate, config.seed)
    return source, target


@dataclass
class Predictions:
    probs: np.ndarray
    branch_predictions: dict
    embeddings: np.ndarray

    @property
    def labels(self) -> np.ndarray:
        return self.probs.argmax(axis=1)


def predict(model: DgdaModel, domain: PreparedDomain, indices, batch_size: int) -> Predictions:
    """Classifier outputs for the utterances of ``indices``, in dialogue order."""
    indices = list(indices)
    probs, embeddings = [], []
    branch_predictions = {b: [] for b in model.branches}
    with ad.no_grad():
        for start in range(0, len(indices), batch_size):
            output = model.classify(domain.batch(indices[start: start + batch_size]))
            probs.append(output.probs.data)
            embeddings.append(np.concatenate([output.embeddings[b].data for b in model.branches], axis=1))
            for b in model.branches:
                branch_predictions[b].append(output.branch_logits[b].data.argmax(axis=1))
    return Predictions(
        probs=np.concatenate(probs),
        branch_predictions={b: np.concatenate(v) for b, v in branch_predictions.items()},
        embeddings=np.concatenate(embeddings),
    )


def _agreement(predictions: Predictions) -> float:
    if len(predictions.branch_predictions) < 2:
        return 1.0
    return branch_agreement(predictions.branch_predictions["hgnn"], predictions.branch_predictions["pathnn"])


def evaluate(model: DgdaModel, dataset: DomainDataset, config: TrainConfig, indices=None,
             prepared: PreparedDomain = None) -> MetricsReport:
    """Deterministic report on ``dataset``; the only consumer of evaluation labels."""
    domain = SOURCE if dataset.domain_tag == "source" else TARGET
    prepared = prepared or prepare_domain(dataset, config, domain)
    indices = np.arange(len(dataset)) if indices is None else np.asarray(indices)
    if len(indices) == 0:
        raise ContractViolation("evaluate: no dialogues to evaluate")
    predictions = predict(model, prepared, indices, config.batch_size)
    subset = dataset.subset(indices)
    return build_report(
        predictions.labels,
        subset.labels,
        dataset.num_classes,
        memorization_rate=memorization_rate(predictions.labels, subset.labels, subset.noise_mask),
        branch_agreement=_agreement(predictions),
    )


@dataclass
class TrainResult:
    model: DgdaModel
    history: list
    config: TrainConfig
    ema: EmaTracker = None
    target_eval_indices: np.ndarray = field(default=None)


class Trainer:
    def __init__(self, config: TrainConfig, source: DomainDataset, target: DomainDataset, callbacks=()):
        self.config = config.validate()
        self.callbacks = list(callbacks)
        self.source = prepare_domain(source, config, SOURCE)
        self.target = prepare_domain(target, config, TARGET)
        self.target_train, self.target_eval = split_target(len(target), config.target_eval_fraction, config.seed)
        if len(source) == 0:
            raise ContractViolation("train: the source dataset has no dialogues")

        self.model = DgdaModel(config, source.dims, source.num_classes)
        adam = dict(lr=config.lr, beta1=config.adam_beta1, beta2=config.adam_beta2, eps=config.adam_eps)
        self.alignment_optimizers = AlignmentOptimizers(
            discriminator=ad.Adam(self.model.discriminator_parameters(), **adam),
            encoder=ad.Adam(self.model.alignment_parameters(), **adam),
        )
        self.coupling_optimizers = CouplingOptimizers(
            hgnn=ad.Adam(self.model.coupling_parameters("hgnn"), **adam),
            pathnn=ad.Adam(self.model.coupling_parameters("pathnn"), **adam),
        ) if config.coupling_active else None
        self.classifier_optimizer = ad.Adam(self.model.classification_parameters(), **adam)
        self.ema = EmaTracker(source.num_utterances, source.num_classes, config.ema_momentum)
        self.source_labels = source.labels
        self.rng = np.random.default_rng(config.seed)

    def mixed_batches(self):
        bs = self.config.batch_size
        source_order = self.rng.permutation(len(self.source))
        target_order = self.target_train[self.rng.permutation(len(self.target_train))]
        for start in range(0, len(source_order), bs):
            src = source_order[start: start + bs]
            count = min(len(src), len(target_order))
            tgt = np.take(target_order, np.arange(start, start + count), mode="wrap")
            source_batch = self.source.batch(src)
            yield MixedBatch(
                source=source_batch,
                target=self.target.batch(tgt),
                source_labels=self.source_labels[source_batch.sample_ids],
            )

    def classification_step(self, batch: MixedBatch) -> float:
        output = self.model.classify(batch.source)
        ema_rows, ema_mask = self.ema.rows(batch.source.sample_ids)
        loss = cls_loss(output.probs, batch.source_labels, ema_rows, self.config.regularizer_weight, ema_mask)
        value = loss.item()
        self.classifier_optimizer.step(loss)
        return value

    def train_epoch(self, epoch: int) -> dict:
        config = self.config
        sums = {"L_D": 0.0, "L_adv": 0.0, "L_couple": 0.0, "L_cls": 0.0}
        batches = 0
        for batch in self.mixed_batches():
            if config.w_adv > 0:
                aligned = alternate_step(batch, self.model, self.model.discriminators,
                                         self.alignment_optimizers, config.k_disc, config.w_adv)
                sums["L_D"] += aligned.loss_d
                sums["L_adv"] += aligned.loss_adv
            if self.coupling_optimizers is not None:
                coupled = alternate_branch_update(batch, self.model, self.coupling_optimizers, config.zeta,
                                                  config.hard_pseudo_labels, config.w_couple)
                sums["L_couple"] += coupled.total
            sums["L_cls"] += self.classification_step(batch)
            batches += 1
            logger.debug("epoch %d batch %d: %s", epoch, batches, sums)
        return {key: value / max(batches, 1) for key, value in sums.items()}

    def refresh_ema(self, epoch: int) -> Predictions:
        if self.config.ema_freeze_epoch is not None and epoch >= self.config.ema_freeze_epoch:
            self.ema.frozen = True
        predictions = predict(self.model, self.source, range(len(self.source)), self.config.batch_size)
        update_ema(self.ema, np.arange(self.source.dataset.num_utterances), predictions.probs)
        return predictions

    def epoch_report(self, epoch: int, losses: dict, source_predictions: Predictions) -> MetricsReport:
        target = self.target.dataset.subset(self.target_eval)
        predictions = predict(self.model, self.target, self.target_eval, self.config.batch_size)
        source = self.source.dataset
        return build_report(
            predictions.labels,
            target.labels,
            source.num_classes,
            memorization_rate=memorization_rate(source_predictions.labels, source.labels, source.noise_mask),
            branch_agreement=_agreement(predictions),
            epoch=epoch,
            losses=losses,
        )

    def run(self) -> TrainResult:
        history = []
        for epoch in range(1, self.config.epochs + 1):
            started = time.monotonic()
            losses = self.train_epoch(epoch)
            report = self.epoch_report(epoch, losses, self.refresh_ema(epoch))
            history.append(report)
            logger.info(
                "epoch %d/%d wf1=%.4f mem=%.4f L_D=%.4f L_adv=%.4f L_couple=%.4f L_cls=%.4f (%.1fs)",
                epoch, self.config.epochs, report.wf1, report.memorization_rate, losses["L_D"],
                losses["L_adv"], losses["L_couple"], losses["L_cls"], time.monotonic() - started,
            )
            for callback in self.callbacks:
                callback(report)
        return TrainResult(self.model, history, self.config, self.ema, self.target_eval)


def train(config: TrainConfig, source: DomainDataset = None, target: DomainDataset = None,
          callbacks=()) -> TrainResult:
    if source is None or target is None:
        source, target = load_domains(config)
    return Trainer(config, source, target, callbacks).run()


def target_eval_split(config: TrainConfig, target: DomainDataset):
    return split_target(len(target), config.target_eval_fraction, config.seed)[1]
