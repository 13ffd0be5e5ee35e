"""Random-matrix trust statistics for attention maps.

An attention map is resized to ``m x m``, its entries standardized, and the
spectrum of the Gram matrix ``G = Z Z^T / m`` compared against the
Marchenko-Pastur bulk edge. For an i.i.d. map the top eigenvalue sits near
the edge (4 for a square standardized matrix); structure pushes it far
beyond. The trust scalar ``sigmoid(beta * (edge - lambda_max) / edge)`` is
therefore around 0.5 for noise and tends to 0 for strongly structured maps.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from .tensor import Tensor, bilinear_resize

MP_EDGE_SQUARE = 4.0
ZERO_VARIANCE = 1e-12


@dataclass(frozen=True)
class TrustConfig:
    spectral_size: int = 16
    beta: float = 1.0
    fed_tau: float = 8.0
    isa_alpha: float = 4.0
    isa_initial_tau: float = 4.0

    def __post_init__(self):
        if self.spectral_size < 2:
            raise ValueError(f"spectral_size must be >= 2, got {self.spectral_size}")
        if self.beta <= 0:
            raise ValueError(f"beta must be positive, got {self.beta}")
        if self.fed_tau <= 0 or self.isa_alpha <= 0 or self.isa_initial_tau <= 0:
            raise ValueError("fed_tau, isa_alpha and isa_initial_tau must be positive")


@dataclass(frozen=True)
class SpectralSummary:
    eigenvalues: np.ndarray
    lambda_max: float
    mp_edge: float
    trust: float


def downsample_map(M: np.ndarray, m: int) -> np.ndarray:
    """Bilinear resize of the trailing two axes of ``M`` to ``m x m``."""
    M = np.asarray(M)
    if M.shape[-2] < 2 or M.shape[-1] < 2:
        raise ValueError(f"attention map must be at least 2x2, got {M.shape[-2:]}")
    return bilinear_resize(Tensor(M), m, m).data


def _round_robin(n: int) -> list[tuple[np.ndarray, np.ndarray]]:
    """Rounds of disjoint index pairs covering every pair once per sweep."""
    players = list(range(n + (n % 2)))
    rounds = []
    for _ in range(len(players) - 1):
        half = len(players) // 2
        pairs = [(players[i], players[-1 - i]) for i in range(half)]
        pairs = [(min(a, b), max(a, b)) for a, b in pairs if a < n and b < n]
        rounds.append((np.array([a for a, _ in pairs]), np.array([b for _, b in pairs])))
        players = [players[0], players[-1]] + players[1:-1]
    return rounds


def jacobi_eigvalsh(A: np.ndarray, tol: float = 1e-12, max_sweeps: int = 50) -> np.ndarray:
    """Eigenvalues of symmetric matrices by cyclic Jacobi rotations.

    ``A`` has shape ``[..., n, n]``. Each sweep visits every off-diagonal
    pair once in round-robin order; the rotations of one round act on
    disjoint index pairs and are applied together as a single orthogonal
    similarity. Returns eigenvalues sorted in descending order.
    """
    A = np.array(A, dtype=np.float64, copy=True)
    n = A.shape[-1]
    if A.shape[-2] != n:
        raise ValueError(f"matrix must be square, got {A.shape[-2:]}")
    lead = A.shape[:-2]
    if n == 1:
        return A[..., 0, :].copy()
    A = A.reshape(-1, n, n)
    N = A.shape[0]
    iu = np.triu_indices(n, 1)
    scale = np.maximum(np.abs(A).max(axis=(1, 2)), np.finfo(float).tiny)
    rounds = _round_robin(n)
    eye = np.eye(n)
    for _ in range(max_sweeps):
        off = np.abs(A[:, iu[0], iu[1]]).max(axis=1)
        live = off > tol * scale
        if not live.any():
            break
        for p, q in rounds:
            apq = A[:, p, q]
            active = (np.abs(apq) > tol * 1e-3 * scale[:, None]) & live[:, None]
            safe = np.where(active, apq, 1.0)
            theta = (A[:, q, q] - A[:, p, p]) / (2.0 * safe)
            t = np.sign(theta) / (np.abs(theta) + np.sqrt(theta * theta + 1.0))
            t = np.where(theta == 0, 1.0, t)
            t = np.where(active, t, 0.0)
            c = 1.0 / np.sqrt(t * t + 1.0)
            s = t * c
            J = np.broadcast_to(eye, (N, n, n)).copy()
            J[:, p, p] = c
            J[:, q, q] = c
            J[:, p, q] = s
            J[:, q, p] = -s
            A = np.swapaxes(J, 1, 2) @ A @ J
            A[:, p, q] = 0.0
            A[:, q, p] = 0.0
    eig = np.diagonal(A, axis1=1, axis2=2)
    eig = -np.sort(-eig, axis=1)
    return eig.reshape(*lead, n)


def standardized_gram(M: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Standardize each ``m x m`` map and return ``(Z Z^T / m, degenerate)``.

    ``degenerate`` flags maps whose entry variance is below 1e-12; their Gram
    matrix is returned as zeros.
    """
    M = np.asarray(M, dtype=np.float64)
    m = M.shape[-1]
    mu = M.mean(axis=(-2, -1), keepdims=True)
    var = ((M - mu) ** 2).mean(axis=(-2, -1), keepdims=True)
    degenerate = var[..., 0, 0] < ZERO_VARIANCE
    Z = (M - mu) / np.sqrt(np.where(degenerate[..., None, None], 1.0, var))
    Z = np.where(degenerate[..., None, None], 0.0, Z)
    return Z @ np.swapaxes(Z, -1, -2) / m, degenerate


def trust_from_lambda(lambda_max, mp_edge: float = MP_EDGE_SQUARE, beta: float = 1.0):
    return expit(beta * (mp_edge - np.asarray(lambda_max, dtype=np.float64)) / mp_edge)


def spectral_stats(maps: np.ndarray, beta: float = 1.0) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Batched spectra of square maps ``[..., m, m]``.

    Returns ``(eigenvalues [..., m], lambda_max [...], trust [...])``.
    """
    maps = np.asarray(maps)
    if maps.shape[-1] != maps.shape[-2]:
        raise ValueError(f"map must be square, got {maps.shape[-2:]}")
    G, _ = standardized_gram(maps)
    eig = np.clip(jacobi_eigvalsh(G), 0.0, None)
    lam = eig[..., 0]
    return eig, lam, trust_from_lambda(lam, MP_EDGE_SQUARE, beta)


def spectral_summary(Mtil: np.ndarray, cfg: TrustConfig = TrustConfig()) -> SpectralSummary:
    Mtil = np.asarray(Mtil)
    if Mtil.ndim != 2 or Mtil.shape[0] != Mtil.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {Mtil.shape}")
    if Mtil.shape[0] < 2:
        raise ValueError("matrix side must be >= 2")
    eig, lam, trust = spectral_stats(Mtil, cfg.beta)
    return SpectralSummary(eig, float(lam), MP_EDGE_SQUARE, float(trust))


def adjust_threshold(base_threshold, trust):
    return trust * base_threshold


def patch_lambda_max(patches: np.ndarray, cfg: TrustConfig) -> tuple[np.ndarray, np.ndarray]:
    """Downsample then summarize a stack of maps; returns ``(eigenvalues, lambda_max)``."""
    small = downsample_map(patches, cfg.spectral_size)
    eig, lam, _ = spectral_stats(small, cfg.beta)
    return eig, lam


def fed_filter(patches, tau: float, cfg: TrustConfig = TrustConfig()) -> np.ndarray:
    """Keep-mask over patches: patch ``i`` survives iff its ``lambda_max < tau``."""
    if tau <= 0:
        raise ValueError("tau must be positive")
    if len(patches) == 0:
        return np.zeros(0, dtype=bool)
    _, lam = patch_lambda_max(np.stack([np.asarray(p) for p in patches]), cfg)
    return lam < tau


def isa_threshold(stable_eigenvalues, alpha: float, previous_tau: float) -> float:
    """``alpha * Var(stable eigenvalues)``, falling back to ``previous_tau`` when degenerate."""
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    vals = np.asarray(stable_eigenvalues, dtype=np.float64).ravel()
    if vals.size < 2:
        return previous_tau
    var = float(vals.var())
    if var < ZERO_VARIANCE:
        return previous_tau
    return alpha * var


@dataclass
class IsaState:
    """Running stability threshold for the iterative adjustment strategy."""

    alpha: float = 4.0
    tau: float = 4.0
    history: list[float] = field(default_factory=list)

    def step(self, eigenvalues: np.ndarray, lambda_max: np.ndarray) -> np.ndarray:
        """Return the stable-patch mask under the current tau, then update tau
        from the spectra of the stable patches."""
        stable = lambda_max < self.tau
        self.tau = isa_threshold(eigenvalues[stable], self.alpha, self.tau)
        self.history.append(self.tau)
        return stable
