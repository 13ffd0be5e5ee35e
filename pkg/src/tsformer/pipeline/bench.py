"""Dense versus sparse forward passes: wall time and FLOP ledger."""
from __future__ import annotations

import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..metrics import WORK_CATEGORIES, FlopLedger, flops_report
from ..model import TSFormer, model_forward, param_count
from ..msa import MaskRecorder
from ..tensor import Tensor
from .config import RunConfig
from .report import write_csv

REFERENCE_FLOP_REDUCTION = 0.20


@dataclass
class BenchResult:
    dense_seconds: float
    sparse_seconds: float
    dense: FlopLedger
    sparse: FlopLedger
    reduction: dict[str, float]
    masked_fraction: float
    params: int
    echo: list[str] = field(default_factory=list)

    def lines(self) -> list[str]:
        out = [f"params {self.params}",
               f"wall_dense_s {self.dense_seconds:.3f}",
               f"wall_sparse_s {self.sparse_seconds:.3f}"]
        for c in WORK_CATEGORIES:
            out.append(f"flops {c} dense={self.dense[c]} sparse={self.sparse[c]} "
                       f"reduction={self.reduction[c]:.4%}")
        out.append(f"flops total reduction={self.reduction['total']:.4%}")
        out.append(f"masked_fraction {self.masked_fraction:.4%}")
        out.append(f"reference attention-FLOP reduction reported in the literature: "
                   f"{REFERENCE_FLOP_REDUCTION:.0%} (threshold dependent, not asserted)")
        return out + [f"config {line}" for line in self.echo]


def _timed_pass(model, img, sparsity, recorder=None):
    with FlopLedger() as ledger:
        t0 = time.perf_counter()
        if recorder is None:
            model_forward(img, model, sparsity)
        else:
            with recorder:
                model_forward(img, model, sparsity)
        dt = time.perf_counter() - t0
    return dt, ledger


def run_bench(cfg: RunConfig, out_dir=None, model: TSFormer | None = None) -> BenchResult:
    model = model or TSFormer(cfg.model_config(), seed=cfg.seed)
    rng = np.random.default_rng(cfg.seed)
    img = Tensor(rng.random((1, 3, cfg.bench_size, cfg.bench_size), dtype=np.float32))
    dense_cfg = cfg.sparsity_config(strategy="dense")
    sparse_cfg = cfg.sparsity_config()
    dense_t, sparse_t = [], []
    for _ in range(max(1, cfg.bench_repeats)):
        t, dense = _timed_pass(model, img, dense_cfg)
        dense_t.append(t)
        recorder = MaskRecorder()
        t, sparse = _timed_pass(model, img, sparse_cfg, recorder)
        sparse_t.append(t)
    total = sum(int(m.size) for m in recorder.masks if m is not None)
    kept = sum(int(np.count_nonzero(m)) for m in recorder.masks if m is not None)
    masked = 0.0 if total == 0 else 1.0 - kept / total
    result = BenchResult(min(dense_t), min(sparse_t), dense, sparse, flops_report(sparse, dense),
                         masked, param_count(model), cfg.echo())
    if out_dir is not None:
        rows = [(c, dense[c], sparse[c], result.reduction[c]) for c in WORK_CATEGORIES]
        rows.append(("total", dense.total, sparse.total, result.reduction["total"]))
        write_csv(Path(out_dir) / "bench.csv", ["category", "dense_flops", "sparse_flops", "reduction"],
                  rows, cfg.echo())
    return result
