"""Synthetic benchmark sequences and the degradation protocol.

The synthetic generator deforms a seeded band-limited noise texture by a
smooth sinusoidal displacement field whose flow is known exactly. The
degradations are occluding discs orbiting the frame centre, additive Gaussian
noise and salt & pepper noise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.ndimage import gaussian_filter

from lcmflow import kernels
from lcmflow.errors import ConfigurationError
from lcmflow.flowfield import FlowField
from lcmflow.imagecore import Image

DEGRADATIONS = ("occlusion", "gaussian", "saltpepper")

OCCLUDER_RADIUS = 20
OCCLUDER_ORBIT = 0.3
GAUSSIAN_SIGMA = 0.2
SALT_PEPPER_DENSITY = 0.10
TEXTURE_OCTAVES = (1.5, 3.0, 6.0)
TEXTURE_SHARPNESS = 2.0


def noise_texture(height: int, width: int, seed: int = 42, octaves=TEXTURE_OCTAVES,
                  sharpness: float = TEXTURE_SHARPNESS) -> np.ndarray:
    """Multi-octave band-limited noise, contrast-sharpened and rescaled to span exactly [0, 1].

    Each octave is Gaussian-filtered white noise at one of the ``octaves``
    scales, normalised to unit variance. The coarse octaves keep structure
    alive on coarse pyramid levels, and the ``tanh`` sharpening raises the
    gradient energy so the data term outweighs the default smoothness.
    """
    rng = np.random.default_rng(seed)
    a = np.zeros((height, width))
    for sigma in octaves:
        b = gaussian_filter(rng.random((height, width)), sigma, mode="reflect")
        a += (b - b.mean()) / b.std()
    a /= a.std()
    if sharpness > 0:
        a = np.tanh(sharpness * a)
    return (a - a.min()) / (a.max() - a.min())


def sinusoidal_flow(shape, amplitude: float, phase: float = 0.0) -> FlowField:
    """Smooth non-rigid displacement with ``max |w| == amplitude`` attained at the centre pixel.

    Magnitude is ``amplitude * cos^2(pi (x - cx) / W) * cos^2(pi (y - cy) / H)``,
    a single bump vanishing towards the borders; the direction makes one full
    turn along the image diagonal.
    """
    h, w = shape
    cx, cy = w // 2, h // 2
    xs, ys = np.meshgrid(np.arange(w, dtype=np.float64), np.arange(h, dtype=np.float64))
    mag = amplitude * np.cos(np.pi * (xs - cx) / w) ** 2 * np.cos(np.pi * (ys - cy) / h) ** 2
    angle = 2.0 * np.pi * (xs + ys) / (w + h) + phase
    return FlowField(mag * np.cos(angle), mag * np.sin(angle))


@dataclass
class SyntheticSequence:
    """``frames[0]`` is the reference; ``flows[f]`` maps ``frames[f]`` onto it (``flows[0]`` is zero)."""

    frames: list[Image]
    flows: list[FlowField]


def synth_sequence(width: int, height: int, amplitude: float, frames: int = 2,
                   seed: int = 42) -> SyntheticSequence:
    """Frame ``f`` samples the reference texture at ``X + w_f(X)`` so that
    ``frames[0](X + w_f) == frames[f](X)`` holds exactly for the bicubic texture.
    """
    if width < 64 or height < 64:
        raise ConfigurationError("synthetic frames must be at least 64x64")
    if not 0 <= amplitude < min(width, height) / 4:
        raise ConfigurationError(
            f"amplitude {amplitude} must be in [0, {min(width, height) / 4})"
        )
    if frames < 2:
        raise ConfigurationError("need at least two frames")
    margin = int(math.ceil(amplitude)) + 4
    canvas = noise_texture(height + 2 * margin, width + 2 * margin, seed)
    rng = np.random.default_rng(seed)
    phases = rng.uniform(0.0, 2.0 * np.pi, size=frames)
    xs, ys = np.meshgrid(np.arange(width, dtype=np.float64), np.arange(height, dtype=np.float64))
    ref = canvas[margin:margin + height, margin:margin + width].copy()
    out_frames = [Image(ref)]
    out_flows = [FlowField.zeros((height, width))]
    for f in range(1, frames):
        w = sinusoidal_flow((height, width), amplitude * f / (frames - 1), phases[f])
        img = kernels.bicubic_sample(canvas, xs + margin + w.u, ys + margin + w.v)
        out_frames.append(Image(np.clip(img, 0.0, 1.0)))
        out_flows.append(w)
    return SyntheticSequence(out_frames, out_flows)


def occluder_centres(shape, index: int, count: int):
    """Centres of the two discs for frame ``index`` of ``count``: one orbit per sequence."""
    h, w = shape
    radius = OCCLUDER_ORBIT * min(h, w)
    theta = 2.0 * np.pi * index / max(count, 1)
    cx, cy = (w - 1) / 2.0, (h - 1) / 2.0
    return [
        (cx + radius * np.cos(theta + s), cy + radius * np.sin(theta + s))
        for s in (0.0, np.pi)
    ]


def occlusion_mask(shape, index: int, count: int, radius: float = OCCLUDER_RADIUS) -> np.ndarray:
    h, w = shape
    xs, ys = np.meshgrid(np.arange(w), np.arange(h))
    mask = np.zeros(shape, dtype=bool)
    for cx, cy in occluder_centres(shape, index, count):
        mask |= (xs - cx) ** 2 + (ys - cy) ** 2 <= radius**2
    return mask


def degrade(img: Image, kind: str, seed: int = 42, index: int = 0, count: int = 1) -> Image:
    """Apply one degradation to frame ``index`` of a ``count``-frame sequence."""
    rng = np.random.default_rng([seed, index])
    a = img.data.copy()
    if kind == "occlusion":
        a[occlusion_mask(a.shape, index, count)] = 0.0
    elif kind == "gaussian":
        a = np.clip(a + rng.normal(0.0, GAUSSIAN_SIGMA, a.shape), 0.0, 1.0)
    elif kind == "saltpepper":
        n = a.size
        k = int(round(SALT_PEPPER_DENSITY * n))
        idx = rng.choice(n, size=k, replace=False)
        flat = a.ravel()
        flat[idx] = rng.integers(0, 2, size=k).astype(np.float64)
        a = flat.reshape(a.shape)
    else:
        raise ConfigurationError(f"unknown degradation {kind!r}; choose from {DEGRADATIONS}")
    return Image(a)
