"""Flow and frame-interpolation error statistics."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass

import numpy as np

from lcmflow.errors import DimensionError
from lcmflow.flowfield import FlowField
from lcmflow.imagecore import Image

NIE_OFFSET = 1.0


@dataclass
class ErrorReport:
    mean_epe: float
    rms_epe: float
    median_epe: float
    percentile_99_epe: float
    mean_angular_error_deg: float
    valid_pixel_count: int
    interp_error_rms: float | None = None
    normalized_interp_error: float | None = None

    def as_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.as_dict(), indent=2, sort_keys=True)

    def to_text(self) -> str:
        lines = []
        for key, value in self.as_dict().items():
            if value is None:
                continue
            lines.append(f"{key} = {value!r}")
        return "\n".join(lines)


@dataclass
class EndpointStats:
    mean: float
    rms: float
    median: float
    p99: float
    count: int


def nearest_rank_percentile(values, p: float) -> float:
    """Smallest value with at least ``p`` percent of the data at or below it."""
    s = np.sort(np.asarray(values, dtype=np.float64).ravel())
    if s.size == 0:
        raise ValueError("percentile of an empty set")
    rank = max(1, math.ceil(p / 100.0 * s.size))
    return float(s[rank - 1])


def _mask(w: FlowField, gt: FlowField, mask) -> np.ndarray:
    if w.shape != gt.shape:
        raise DimensionError(f"flow {w.shape} and ground truth {gt.shape} differ")
    m = np.ones(w.shape, dtype=bool)
    if mask is not None:
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != w.shape:
            raise DimensionError("mask shape differs from the flow")
        m &= mask
    for f in (w, gt):
        if f.valid is not None:
            m &= f.valid
    if not m.any():
        raise ValueError("no valid pixels to evaluate")
    return m


def endpoint_error(w: FlowField, gt: FlowField, mask=None) -> EndpointStats:
    m = _mask(w, gt, mask)
    e = np.hypot(w.u[m] - gt.u[m], w.v[m] - gt.v[m])
    return EndpointStats(
        mean=float(e.mean()),
        rms=float(np.sqrt(np.mean(e * e))),
        median=nearest_rank_percentile(e, 50.0),
        p99=nearest_rank_percentile(e, 99.0),
        count=int(e.size),
    )


def angular_error(w: FlowField, gt: FlowField, mask=None) -> float:
    """Mean angle in degrees between ``(u, v, 1)`` and ``(u_gt, v_gt, 1)``."""
    m = _mask(w, gt, mask)
    u, v, ug, vg = w.u[m], w.v[m], gt.u[m], gt.v[m]
    num = u * ug + v * vg + 1.0
    den = np.sqrt(u * u + v * v + 1.0) * np.sqrt(ug * ug + vg * vg + 1.0)
    return float(np.degrees(np.arccos(np.clip(num / den, -1.0, 1.0))).mean())


def interpolation_error(predicted: Image, truth: Image, gradient_normalized: bool = False) -> float:
    """RMS intensity error; the normalised variant divides by ``|grad truth|^2 + 1``."""
    if predicted.shape != truth.shape:
        raise DimensionError(f"frames differ: {predicted.shape} vs {truth.shape}")
    d2 = (predicted.data - truth.data) ** 2
    if gradient_normalized:
        gy, gx = np.gradient(truth.data)
        d2 = d2 / (gx * gx + gy * gy + NIE_OFFSET)
    return float(np.sqrt(d2.mean()))


def evaluate(w: FlowField, gt: FlowField, mask=None, predicted: Image | None = None,
             truth: Image | None = None) -> ErrorReport:
    """Full report; interpolation fields are filled when both frames are given."""
    epe = endpoint_error(w, gt, mask)
    report = ErrorReport(
        mean_epe=epe.mean,
        rms_epe=epe.rms,
        median_epe=epe.median,
        percentile_99_epe=epe.p99,
        mean_angular_error_deg=angular_error(w, gt, mask),
        valid_pixel_count=epe.count,
    )
    if predicted is not None and truth is not None:
        report.interp_error_rms = interpolation_error(predicted, truth)
        report.normalized_interp_error = interpolation_error(predicted, truth, True)
    return report
