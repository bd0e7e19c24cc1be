"""The displacement field type shared by the solver, warping, metrics and I/O."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from lcmflow.errors import DimensionError


@dataclass
class FlowField:
    """Per-pixel displacement ``(u, v)`` in pixels, indexed ``[y, x]``.

    ``valid`` is an optional boolean mask; ``None`` means every pixel is known.
    """

    u: np.ndarray
    v: np.ndarray
    valid: np.ndarray | None = None

    def __post_init__(self):
        self.u = np.ascontiguousarray(self.u, dtype=np.float64)
        self.v = np.ascontiguousarray(self.v, dtype=np.float64)
        if self.u.shape != self.v.shape or self.u.ndim != 2:
            raise DimensionError(f"u {self.u.shape} and v {self.v.shape} must be equal 2-D shapes")
        if self.valid is not None:
            self.valid = np.asarray(self.valid, dtype=bool)
            if self.valid.shape != self.u.shape:
                raise DimensionError("valid mask shape does not match the flow")

    @classmethod
    def zeros(cls, shape) -> FlowField:
        return cls(np.zeros(shape), np.zeros(shape))

    @classmethod
    def constant(cls, shape, u: float, v: float) -> FlowField:
        return cls(np.full(shape, float(u)), np.full(shape, float(v)))

    @property
    def shape(self):
        return self.u.shape

    @property
    def height(self) -> int:
        return self.u.shape[0]

    @property
    def width(self) -> int:
        return self.u.shape[1]

    def is_finite(self) -> bool:
        mask = self.valid if self.valid is not None else slice(None)
        return bool(np.all(np.isfinite(self.u[mask])) and np.all(np.isfinite(self.v[mask])))

    def __add__(self, other: FlowField) -> FlowField:
        return FlowField(self.u + other.u, self.v + other.v)

    def copy(self) -> FlowField:
        valid = None if self.valid is None else self.valid.copy()
        return FlowField(self.u.copy(), self.v.copy(), valid)
