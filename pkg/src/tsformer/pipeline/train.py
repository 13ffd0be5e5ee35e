"""Toy restoration training on synthetic degradations."""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..checkpoint import checkpoint_save
from ..metrics import psnr
from ..model import TSFormer, model_forward
from ..tensor import OptimizerState, Tape, Tensor, adamw_step, l1_loss
from .config import RunConfig
from .degrade import procedural_set, procedural_texture
from .imageio import load_image
from .report import write_csv


class DataError(ValueError):
    pass


EVAL_EVERY = 10


@dataclass
class TrainResult:
    model: TSFormer
    train_l1: list[float]
    eval_l1: list[tuple[int, float]]
    loss_csv: Path | None
    checkpoint: Path | None

    @property
    def initial_l1(self) -> float:
        return self.eval_l1[0][1]

    @property
    def final_l1(self) -> float:
        return self.eval_l1[-1][1]


def load_dataset(cfg: RunConfig) -> list[np.ndarray]:
    """Clean ``[3, H, W]`` images from ``data_dir`` or the procedural generator."""
    if cfg.data_dir:
        d = Path(cfg.data_dir)
        if not d.is_dir():
            raise DataError(f"data_dir {d} is not a directory")
        files = sorted(p for p in d.iterdir() if p.suffix.lower() in (".png", ".ppm"))
        images = [load_image(p).data[0] for p in files]
    else:
        images = procedural_set(cfg.seed, cfg.train_images, cfg.image_size)
    images = [im for im in images if min(im.shape[1:]) >= cfg.crop]
    if not images:
        raise DataError(f"empty dataset: no image is at least {cfg.crop}x{cfg.crop}")
    return images


def sample_batch(images, rng: np.random.Generator, batch: int, crop: int) -> np.ndarray:
    out = np.empty((batch, 3, crop, crop), dtype=np.float32)
    for b in range(batch):
        im = images[rng.integers(len(images))]
        y = rng.integers(im.shape[1] - crop + 1)
        x = rng.integers(im.shape[2] - crop + 1)
        patch = im[:, y:y + crop, x:x + crop]
        if rng.random() < 0.5:
            patch = patch[:, ::-1, :]
        if rng.random() < 0.5:
            patch = patch[:, :, ::-1]
        out[b] = patch
    return out


def _l1(model, degraded: np.ndarray, clean: np.ndarray) -> float:
    out = model_forward(Tensor(degraded), model)
    return float(np.abs(out.data.astype(np.float64) - clean).mean())


def train_toy(cfg: RunConfig, out_dir=None, log=None) -> TrainResult:
    """Train a fresh model with AdamW and L1 loss on degraded random crops.

    ``train_l1`` holds the loss of every training batch. ``eval_l1`` is the
    loss on one fixed degraded batch, measured before the first update,
    every ``EVAL_EVERY`` iterations and after the last one.
    """
    images = load_dataset(cfg)
    rng = np.random.default_rng(cfg.seed)
    model = TSFormer(cfg.model_config(), seed=cfg.seed)
    params = model.parameters()
    opt = OptimizerState(lr=cfg.lr, weight_decay=cfg.weight_decay)
    spec = cfg.degradation_spec()

    eval_rng = np.random.default_rng([cfg.seed, 1])
    eval_clean = sample_batch(images, eval_rng, cfg.batch, cfg.crop)
    eval_degraded = spec.apply(eval_clean, eval_rng)

    train_l1: list[float] = []
    eval_l1 = [(0, _l1(model, eval_degraded, eval_clean))]
    for it in range(1, cfg.iterations + 1):
        clean = sample_batch(images, rng, cfg.batch, cfg.crop)
        degraded = spec.apply(clean, rng)
        for p in params:
            p.grad[...] = 0
        with Tape() as tape:
            loss = l1_loss(model_forward(Tensor(degraded), model), Tensor(clean))
        tape.backward(loss)
        adamw_step(params, opt)
        train_l1.append(loss.item())
        if it % EVAL_EVERY == 0 or it == cfg.iterations:
            eval_l1.append((it, _l1(model, eval_degraded, eval_clean)))
        if log is not None:
            log(f"iter {it} l1 {train_l1[-1]:.6f}")

    loss_csv = ckpt = None
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        evals = dict(eval_l1)
        rows = [(0, "", evals[0])] + [(i, train_l1[i - 1], evals.get(i, "")) for i in range(1, cfg.iterations + 1)]
        loss_csv = write_csv(out_dir / "loss.csv", ["iteration", "train_l1", "eval_l1"], rows, cfg.echo())
        ckpt = out_dir / "model.tsf"
        checkpoint_save(model, ckpt)
    return TrainResult(model, train_l1, eval_l1, loss_csv, ckpt)


def heldout_pair(cfg: RunConfig, size: int = 64) -> tuple[np.ndarray, np.ndarray]:
    """A clean image outside the training stream and its degraded copy."""
    rng = np.random.default_rng([cfg.seed, 2])
    clean = procedural_texture(rng, size, size)[None]
    return clean, cfg.degradation_spec().apply(clean, rng)


def psnr_gain(model, clean: np.ndarray, degraded: np.ndarray) -> tuple[float, float]:
    """``(PSNR(degraded, clean), PSNR(restored, clean))`` with the restored image clamped to [0, 1]."""
    restored = np.clip(model_forward(Tensor(degraded), model).data, 0.0, 1.0)
    return psnr(np.clip(degraded, 0.0, 1.0), clean), psnr(restored, clean)
