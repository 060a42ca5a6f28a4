import numpy as np

from . import autodiff as ad
from .exceptions import ContractViolation


def uniform_init(rng: np.random.Generator, shape, fan_in: int) -> np.ndarray:
    bound = 1.0 / np.sqrt(max(fan_in, 1))
    return rng.uniform(-bound, bound, size=shape)


class Block:
    """Owner of named parameters; children Blocks and Parameters are found through attributes."""

    def parameters(self) -> list:
        seen, out = set(), []
        for value in vars(self).values():
            for p in _walk(value):
                if id(p) not in seen:
                    seen.add(id(p))
                    out.append(p)
        return out

    def named_parameters(self) -> dict:
        return {p.name: p for p in self.parameters()}


def _walk(value):
    if isinstance(value, ad.Parameter):
        yield value
    elif isinstance(value, Block):
        yield from value.parameters()
    elif isinstance(value, dict):
        for item in value.values():
            yield from _walk(item)
    elif isinstance(value, (list, tuple)):
        for item in value:
            yield from _walk(item)


def check_unique_names(params) -> None:
    names = [p.name for p in params]
    duplicates = sorted({n for n in names if names.count(n) > 1})
    if duplicates:
        raise ContractViolation(f"duplicate parameter names: {duplicates}")


class Linear(Block):
    """Row-wise affine map x W + b."""

    def __init__(self, name: str, in_features: int, out_features: int, rng: np.random.Generator,
                 bias: bool = True):
        self.in_features = in_features
        self.out_features = out_features
        self.weight = ad.Parameter(uniform_init(rng, (in_features, out_features), in_features), f"{name}.weight")
        self.bias = ad.Parameter(uniform_init(rng, (out_features,), in_features), f"{name}.bias") if bias else None

    def __call__(self, x: ad.Tensor) -> ad.Tensor:
        if x.ndim != 2 or x.shape[1] != self.in_features:
            raise ContractViolation(
                f"linear {self.weight.name}: expected (n, {self.in_features}) input, got {x.shape}"
            )
        out = ad.matmul(x, self.weight)
        return ad.add(out, self.bias) if self.bias is not None else out


class TwoLayerPerceptron(Block):
    """in -> hidden (leaky_relu) -> out."""

    def __init__(self, name: str, in_features: int, hidden: int, out_features: int,
                 rng: np.random.Generator, slope: float = ad.DEFAULT_LEAKY_SLOPE):
        self.hidden = Linear(f"{name}.hidden", in_features, hidden, rng)
        self.output = Linear(f"{name}.output", hidden, out_features, rng)
        self.slope = slope

    def __call__(self, x: ad.Tensor) -> ad.Tensor:
        return self.output(ad.leaky_relu(self.hidden(x), self.slope))
