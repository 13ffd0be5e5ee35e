"""Synthetic degradations and a procedural clean-image source."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

KINDS = ("gaussian_noise", "gamma_darken", "synthetic_haze")


@dataclass(frozen=True)
class DegradationSpec:
    """One degradation with its parameters.

    ``gaussian_noise`` adds N(0, sigma^2) per pixel; ``gamma_darken`` maps
    ``x -> x**gamma``; ``synthetic_haze`` blends toward airlight ``A`` with
    transmission ``t`` as ``x*t + A*(1-t)``. Only noise consumes the seed.
    """

    kind: str = "gaussian_noise"
    sigma: float = 0.1
    gamma: float = 2.2
    t: float = 0.6
    A: float = 0.9
    seed: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown degradation {self.kind!r}; expected one of {KINDS}")
        if self.sigma < 0:
            raise ValueError("sigma must be nonnegative")
        if self.gamma <= 0:
            raise ValueError("gamma must be positive")
        if not 0 < self.t <= 1:
            raise ValueError("transmission t must lie in (0, 1]")

    def apply(self, clean: np.ndarray, rng: np.random.Generator | None = None) -> np.ndarray:
        """Degrade ``clean``. Without ``rng`` the noise stream comes from ``seed``."""
        x = np.asarray(clean, dtype=np.float32)
        if self.kind == "gaussian_noise":
            rng = np.random.default_rng(self.seed) if rng is None else rng
            return (x + self.sigma * rng.standard_normal(x.shape)).astype(np.float32)
        if self.kind == "gamma_darken":
            return np.power(np.clip(x, 0.0, None), self.gamma).astype(np.float32)
        return (x * self.t + self.A * (1.0 - self.t)).astype(np.float32)


def procedural_texture(rng: np.random.Generator, h: int, w: int, waves: int = 6) -> np.ndarray:
    """Smooth colored texture ``[3, h, w]`` in ``[0, 1]``: a few oriented
    sinusoids per channel over a linear gradient, plus a soft-edged disc."""
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    out = np.empty((3, h, w))
    gy, gx = rng.uniform(-1, 1, size=2)
    base = 0.5 + 0.25 * (gy * yy / max(h, 1) + gx * xx / max(w, 1))
    cy, cx = rng.uniform(0, h), rng.uniform(0, w)
    r = rng.uniform(0.15, 0.4) * min(h, w)
    disc = 1.0 / (1.0 + np.exp((np.hypot(yy - cy, xx - cx) - r) / 1.5))
    for c in range(3):
        acc = base.copy()
        for _ in range(waves):
            freq = rng.uniform(0.02, 0.25)
            theta = rng.uniform(0, np.pi)
            phase = rng.uniform(0, 2 * np.pi)
            amp = rng.uniform(0.03, 0.12)
            acc += amp * np.sin(2 * np.pi * freq * (np.cos(theta) * xx + np.sin(theta) * yy) + phase)
        acc += rng.uniform(-0.3, 0.3) * disc
        out[c] = acc
    return np.clip(out, 0.0, 1.0).astype(np.float32)


def procedural_set(seed: int, count: int, size: int) -> list[np.ndarray]:
    rng = np.random.default_rng(seed)
    return [procedural_texture(rng, size, size) for _ in range(count)]
