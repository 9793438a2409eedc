"""Aggregation (low-pass) and comparison (band-pass) filters over the lazy walk."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sp

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ConfigError, ShapeError
from .graph import DiffusionOperator

Transform = Callable[[Tensor], Tensor]


@dataclass(frozen=True)
class Aggregation:
    k: int

    def __post_init__(self):
        if self.k < 1:
            raise ConfigError(f"aggregation scale must be >= 1, got {self.k}")

    @property
    def powers(self) -> tuple[int, ...]:
        return (self.k,)

    @property
    def label(self) -> str:
        return f"A{self.k}"


@dataclass(frozen=True)
class Comparison:
    k1: int
    k2: int

    def __post_init__(self):
        if self.k1 < 1 or self.k2 < 1:
            raise ConfigError(f"comparison scales must be >= 1, got ({self.k1}, {self.k2})")
        if self.k1 == self.k2:
            raise ConfigError(f"comparison needs distinct scales, got {self.k1} twice")

    @property
    def powers(self) -> tuple[int, ...]:
        return (self.k1, self.k2)

    @property
    def label(self) -> str:
        return f"C{self.k1}-{self.k2}"


@dataclass(frozen=True)
class FilterBank:
    aggregations: tuple[Aggregation, ...] = field(default_factory=lambda: tuple(Aggregation(k) for k in (1, 2, 3)))
    comparisons: tuple[Comparison, ...] = field(
        default_factory=lambda: tuple(Comparison(a, b) for a, b in ((1, 2), (2, 4), (4, 8)))
    )

    def __post_init__(self):
        if not self.aggregations and not self.comparisons:
            raise ConfigError("filter bank is empty")

    @classmethod
    def from_config(cls, aggregations: Sequence[int], comparisons: Sequence[Sequence[int]]) -> "FilterBank":
        return cls(tuple(Aggregation(int(k)) for k in aggregations), tuple(Comparison(int(a), int(b)) for a, b in comparisons))

    @classmethod
    def dyadic(cls, levels: int = 3) -> "FilterBank":
        """Aggregations P^1..P^levels and wavelets P^(2^(j-1)) - P^(2^j), j = 1..levels."""
        return cls(
            tuple(Aggregation(k) for k in range(1, levels + 1)),
            tuple(Comparison(2 ** (j - 1), 2**j) for j in range(1, levels + 1)),
        )

    @property
    def filters(self) -> tuple:
        return self.aggregations + self.comparisons

    def powers(self) -> list[int]:
        return sorted({p for f in self.filters for p in f.powers})


def _matrix(op) -> sp.spmatrix:
    return op.matrix if isinstance(op, DiffusionOperator) else op


class DiffusionCache:
    """Powers P^k x computed once by repeated multiplication and shared by all
    filters of a layer (so P^4 x reuses the products that gave P^2 x)."""

    def __init__(self, op, x: Tensor):
        self.P = _matrix(op)
        if self.P.shape[1] != x.shape[0]:
            raise ShapeError(f"operator of size {self.P.shape} vs input {x.shape}")
        self._powers: dict[int, Tensor] = {0: x}

    def power(self, k: int) -> Tensor:
        top = max(self._powers)
        while top < k:
            self._powers[top + 1] = ad.spmm(self.P, self._powers[top])
            top += 1
        return self._powers[k]


def _identity(t: Tensor) -> Tensor:
    return t


def apply_aggregation(f: Aggregation, x, op, transform: Transform | None = None, cache: DiffusionCache | None = None) -> Tensor:
    """m(P^k x)."""
    x = x if isinstance(x, Tensor) else Tensor(x)
    cache = cache or DiffusionCache(op, x)
    return (transform or _identity)(cache.power(f.k))


def apply_comparison(f: Comparison, x, op, transform: Transform | None = None, cache: DiffusionCache | None = None) -> Tensor:
    """m(P^k1 x - P^k2 x)."""
    x = x if isinstance(x, Tensor) else Tensor(x)
    cache = cache or DiffusionCache(op, x)
    return (transform or _identity)(ad.sub(cache.power(f.k1), cache.power(f.k2)))


def apply_filter(f, x, op, transform: Transform | None = None, cache: DiffusionCache | None = None) -> Tensor:
    if isinstance(f, Aggregation):
        return apply_aggregation(f, x, op, transform, cache)
    return apply_comparison(f, x, op, transform, cache)


def filter_responses(bank: FilterBank, x, op, transforms: Sequence[Transform | None] | None = None) -> list[Tensor]:
    """Responses of every filter in ``bank.filters`` order."""
    x = x if isinstance(x, Tensor) else Tensor(x)
    cache = DiffusionCache(op, x)
    transforms = transforms or [None] * len(bank.filters)
    return [apply_filter(f, x, op, m, cache) for f, m in zip(bank.filters, transforms)]


def raw_responses(bank: FilterBank, x: np.ndarray, op) -> np.ndarray:
    """Identity-transform responses as a (num_filters, n, d) array."""
    return np.stack([r.value for r in filter_responses(bank, Tensor(x), op)])
