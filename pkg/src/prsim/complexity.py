"""Operation counts and FLOPS demand of recurrent channel predictors.

Counts follow the usual deep-learning convention of two operations per
multiply-accumulate. Activations and element-wise gate arithmetic are left
out unless ``exact=True``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from .errors import InvalidArgumentError

# matrix-multiply blocks per hidden layer relative to a simple RNN layer
_BLOCKS = {"rnn": 1, "gru": 3, "lstm": 4}


@dataclass(frozen=True)
class NetShape:
    input_size: int
    hidden_sizes: tuple[int, ...]
    output_size: int
    kinds: tuple[str, ...] = ()

    def __post_init__(self):
        hidden = tuple(int(h) for h in self.hidden_sizes)
        object.__setattr__(self, "hidden_sizes", hidden)
        kinds = tuple(self.kinds) or ("lstm",) * len(hidden)
        if len(kinds) == 1 and len(hidden) > 1:
            kinds = kinds * len(hidden)
        object.__setattr__(self, "kinds", kinds)
        if not hidden:
            raise InvalidArgumentError("at least one hidden layer is required")
        if self.input_size < 1 or self.output_size < 1 or min(hidden) < 1:
            raise InvalidArgumentError("all layer sizes must be >= 1")
        if len(kinds) != len(hidden):
            raise InvalidArgumentError("one kind per hidden layer is required")
        for k in kinds:
            if k not in _BLOCKS:
                raise InvalidArgumentError(f"unknown hidden layer kind {k!r}")

    @classmethod
    def uniform(cls, kind: str, input_size: int, hidden: Sequence[int], output_size: int):
        return cls(input_size, tuple(hidden), output_size, (kind,) * len(hidden))


def _hidden_ops(n_prev: int, n: int, exact: bool) -> int:
    # W d and U s products plus the bias add
    if exact:
        return (2 * n_prev - 1) * n + (2 * n - 1) * n + n
    return 2 * n_prev * n + 2 * n * n


def _gate_ops(kind: str, n: int) -> int:
    if kind == "lstm":
        return 7 * n - 3
    if kind == "gru":
        # r*s, 1-z, (1-z)*s, z*cand, final add
        return 5 * n
    return 0


def ops(shape: NetShape, exact: bool = False) -> int:
    """Operations per prediction for any mix of hidden layer kinds."""
    sizes = (shape.input_size,) + shape.hidden_sizes
    total = 2 * shape.input_size * sizes[1] + 2 * sizes[-1] * shape.output_size
    for kind, n_prev, n in zip(shape.kinds, sizes[:-1], sizes[1:]):
        total += _BLOCKS[kind] * _hidden_ops(n_prev, n, exact)
        if exact:
            total += _gate_ops(kind, n)
    return total


def _ops_of_kind(shape: NetShape, kind: str, exact: bool) -> int:
    if any(k != kind for k in shape.kinds):
        raise InvalidArgumentError(f"expected only {kind} hidden layers, got {shape.kinds}")
    return ops(shape, exact)


def ops_rnn(shape: NetShape, exact: bool = False) -> int:
    return _ops_of_kind(shape, "rnn", exact)


def ops_lstm(shape: NetShape, exact: bool = False) -> int:
    return _ops_of_kind(shape, "lstm", exact)


def ops_gru(shape: NetShape, exact: bool = False) -> int:
    return _ops_of_kind(shape, "gru", exact)


@dataclass(frozen=True)
class ComplexityReport:
    ops_per_prediction: int
    prediction_rate_hz: float
    flops: float
    capacity_flops: float | None = None

    @property
    def utilization(self) -> float | None:
        """Fraction of ``capacity_flops`` consumed, if a capacity was given."""
        if self.capacity_flops is None:
            return None
        return self.flops / self.capacity_flops

    def as_dict(self) -> dict:
        return {
            "ops_per_prediction": self.ops_per_prediction,
            "prediction_rate_hz": self.prediction_rate_hz,
            "flops": self.flops,
            "capacity_flops": self.capacity_flops,
            "utilization": self.utilization,
        }


def flops(shape: NetShape, prediction_rate_hz: float, capacity_flops: float | None = None,
          exact: bool = False) -> ComplexityReport:
    if not prediction_rate_hz > 0:
        raise InvalidArgumentError("prediction rate must be > 0")
    if capacity_flops is not None and not capacity_flops > 0:
        raise InvalidArgumentError("capacity must be > 0")
    n = ops(shape, exact)
    return ComplexityReport(n, prediction_rate_hz, n * prediction_rate_hz, capacity_flops)
