"""Reduction operators shared by the flat and hybrid reductions."""
from dataclasses import dataclass

import numpy as np

from .errors import UsageError

_UFUNCS = {
    "sum": np.add,
    "prod": np.multiply,
    "max": np.maximum,
    "min": np.minimum,
}
_DTYPES = {
    "f64": np.dtype(np.float64),
    "i64": np.dtype(np.int64),
}


@dataclass(frozen=True)
class ReduceOp:
    """Element-wise commutative and associative reduction.

    Only the four predefined kinds are accepted; anything else is rejected
    because the hybrid reduction regroups operands across nodes.
    """

    kind: str
    dtype: object = "f64"

    def __post_init__(self):
        kind = str(self.kind).lower()
        if kind not in _UFUNCS:
            raise UsageError(
                f"reduction {self.kind!r} is not a known commutative+associative op")
        try:
            dt = _DTYPES.get(self.dtype) if isinstance(self.dtype, str) else np.dtype(self.dtype)
        except TypeError:
            dt = None
        if dt is None or all(dt != d for d in _DTYPES.values()):
            raise UsageError(f"unsupported reduction element type {self.dtype!r}")
        object.__setattr__(self, "kind", kind)
        object.__setattr__(self, "dtype", dt)

    @property
    def ufunc(self):
        return _UFUNCS[self.kind]

    def check(self, arr: np.ndarray) -> None:
        if arr.dtype != self.dtype:
            raise UsageError(f"{self.kind} over {self.dtype} got {arr.dtype} elements")

    def fold(self, acc: np.ndarray, x: np.ndarray) -> np.ndarray:
        """acc <- acc (op) x, in place."""
        return self.ufunc(acc, x, out=acc)

    def serial(self, arrays) -> np.ndarray:
        acc = None
        for a in arrays:
            a = np.asarray(a, dtype=self.dtype)
            acc = a.copy() if acc is None else self.fold(acc, a)
        return acc


SUM = ReduceOp("sum")
PROD = ReduceOp("prod")
MAX = ReduceOp("max")
MIN = ReduceOp("min")
