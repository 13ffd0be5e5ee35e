"""Sampling-strategy ablation: planted-support recovery and toy restoration.

Planted-support maps model an attention row that should attend to a small,
row-dependent set of columns: each row ``r`` carries ``s_r`` support entries
of a common row amplitude on top of i.i.d. Gaussian noise. Support sizes
vary across rows, so a single ``k`` cannot match every row while a threshold
relative to the row maximum can. Support columns follow a shifted random
permutation so that every column is hit about equally often; this keeps the
clean map close to spectrally flat rather than rank-deficient by accident.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..layers import Module
from ..metrics import psnr, ssim
from ..model import model_forward
from ..msa import MaskRecorder, MinPSparseAttention, SparsityConfig, strategy_keep
from ..rmt import IsaState
from ..tensor import Tensor
from .config import RunConfig
from .report import write_csv
from .train import heldout_pair, train_toy

ABLATION_STRATEGIES = ("top_k", "min_p", "min_p_trusted", "fed", "isa")


@dataclass(frozen=True)
class PlantedMap:
    M: np.ndarray
    support: np.ndarray

    @property
    def k(self) -> int:
        """Mean support size per row, rounded (at least 1)."""
        return max(1, int(round(self.support.sum(axis=1).mean())))


def planted_support(rng: np.random.Generator, n: int = 16, support_min: int = 1,
                    support_max: int = 4, noise: float = 0.1) -> PlantedMap:
    if not 1 <= support_min <= support_max <= n:
        raise ValueError(f"need 1 <= support_min <= support_max <= n, got {support_min}, {support_max}, {n}")
    sizes = rng.integers(support_min, support_max + 1, size=n)
    perm = rng.permutation(n)
    shift = rng.permutation(n)
    stride = max(1, n // support_max)
    support = np.zeros((n, n), dtype=bool)
    M = np.zeros((n, n))
    for r in range(n):
        cols = perm[(shift[r] + stride * np.arange(sizes[r])) % n]
        support[r, cols] = True
        M[r, cols] = rng.uniform(0.5, 1.5)
    M += noise * rng.standard_normal((n, n))
    return PlantedMap(M, support)


def prf(keep: np.ndarray, support: np.ndarray) -> tuple[float, float, float]:
    tp = int(np.count_nonzero(keep & support))
    fp = int(np.count_nonzero(keep & ~support))
    fn = int(np.count_nonzero(~keep & support))
    precision = tp / (tp + fp) if tp + fp else 1.0
    recall = tp / (tp + fn) if tp + fn else 1.0
    f1 = 2 * tp / (2 * tp + fp + fn) if tp + fp + fn else 1.0
    return precision, recall, f1


def _strategy_cfg(cfg: RunConfig, strategy: str, p_base: float, k: int | None) -> SparsityConfig:
    return cfg.sparsity_config(strategy=strategy, p_base=p_base, k=k if strategy == "top_k" else None)


def support_recovery(cfg: RunConfig, noise: float | None = None, support_min: int | None = None,
                     support_max: int | None = None) -> dict[str, dict]:
    """Mean precision/recall/F1 per strategy over ``cfg.ablate_seeds`` maps.

    Top-k receives the map's true mean support size as ``k``. ISA carries
    its threshold from one map to the next, in seed order.
    """
    noise = cfg.ablate_noise if noise is None else noise
    lo = cfg.ablate_support_min if support_min is None else support_min
    hi = cfg.ablate_support_max if support_max is None else support_max
    trust = cfg.trust_config()
    isa = IsaState(trust.isa_alpha, trust.isa_initial_tau)
    scores = {s: [] for s in ABLATION_STRATEGIES}
    retained = {s: [] for s in ABLATION_STRATEGIES}
    for seed in range(cfg.ablate_seeds):
        pm = planted_support(np.random.default_rng([cfg.seed, seed]), cfg.ablate_n, lo, hi, noise)
        for s in ABLATION_STRATEGIES:
            sc = _strategy_cfg(cfg, s, cfg.ablate_p_base, pm.k)
            keep = strategy_keep(pm.M[None], sc, isa if s == "isa" else None)[0]
            scores[s].append(prf(keep, pm.support))
            retained[s].append(_row_softmax(pm.M)[keep])
    out = {}
    for s in ABLATION_STRATEGIES:
        p, r, f = np.mean(np.array(scores[s]), axis=0)
        out[s] = {"precision": float(p), "recall": float(r), "f1": float(f),
                  "retained": np.concatenate(retained[s])}
    return out


def _row_softmax(M: np.ndarray) -> np.ndarray:
    e = np.exp(M - M.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def cumulative_histogram(values: np.ndarray, bins: int) -> tuple[np.ndarray, np.ndarray]:
    """Bin upper edges on [0, 1] and the fraction of ``values`` at or below each."""
    edges = np.linspace(0.0, 1.0, bins + 1)[1:]
    if values.size == 0:
        return edges, np.zeros(bins)
    ordered = np.sort(values)
    return edges, np.searchsorted(ordered, edges, side="right") / values.size


def restoration(cfg: RunConfig, log=None) -> dict[str, dict]:
    """PSNR/SSIM of one trained toy model evaluated under each strategy.

    The model is trained once with the configured strategy; strategies are
    swapped at inference time. Top-k uses ``k`` from the config, or half the
    patch size when unset.
    """
    tcfg = cfg.with_overrides(iterations=cfg.ablate_train_iterations)
    model = train_toy(tcfg, log=log).model
    clean, degraded = heldout_pair(cfg)
    k = cfg.k or max(1, cfg.patch_size // 2)
    out = {}
    for s in ABLATION_STRATEGIES:
        sc = _strategy_cfg(cfg, s, cfg.p_base, k)
        for block in _attention_layers(model):
            block.isa_state = IsaState(sc.trust.isa_alpha, sc.trust.isa_initial_tau)
        with MaskRecorder() as rec:
            restored = np.clip(model_forward(Tensor(degraded), model, sc).data, 0.0, 1.0)
        masks = [m for m in rec.masks if m is not None]
        kept = sum(int(np.count_nonzero(m)) for m in masks) / max(1, sum(m.size for m in masks))
        out[s] = {"psnr": psnr(restored, clean), "ssim": ssim(restored[0], clean[0]),
                  "retained_fraction": kept}
    out["_input"] = {"psnr": psnr(np.clip(degraded, 0.0, 1.0), clean)}
    return out


def _attention_layers(model: Module):
    stack = [model]
    while stack:
        m = stack.pop()
        if isinstance(m, MinPSparseAttention):
            yield m
        for v in vars(m).values():
            if isinstance(v, list):
                stack.extend(x for x in v if isinstance(x, Module))
            elif isinstance(v, Module):
                stack.append(v)


@dataclass
class AblationResult:
    support: dict[str, dict]
    restore: dict[str, dict] | None
    table: Path | None = None
    histogram: Path | None = None


def run_ablation(cfg: RunConfig, out_dir=None, with_restoration: bool = True, log=None) -> AblationResult:
    support = support_recovery(cfg)
    restore = restoration(cfg, log) if with_restoration else None
    result = AblationResult(support, restore)
    if out_dir is not None:
        out_dir = Path(out_dir)
        header = ["strategy", "precision", "recall", "f1", "psnr", "ssim", "retained_fraction"]
        rows = []
        for s in ABLATION_STRATEGIES:
            r = restore[s] if restore else {}
            rows.append((s, support[s]["precision"], support[s]["recall"], support[s]["f1"],
                         r.get("psnr", ""), r.get("ssim", ""), r.get("retained_fraction", "")))
        result.table = write_csv(out_dir / "ablation.csv", header, rows, cfg.echo())
        cols = {}
        for s in ABLATION_STRATEGIES:
            edges, cum = cumulative_histogram(support[s]["retained"], cfg.ablate_bins)
            cols[s] = cum
        hrows = [(float(edges[i]),) + tuple(float(cols[s][i]) for s in ABLATION_STRATEGIES)
                 for i in range(len(edges))]
        result.histogram = write_csv(out_dir / "retained_cdf.csv", ["bin_upper"] + list(ABLATION_STRATEGIES),
                                     hrows, cfg.echo())
    return result
