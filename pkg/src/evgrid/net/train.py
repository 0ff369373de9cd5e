"""Training loop, Adam optimizer, dataset access and MC-dropout prediction."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from evgrid.errors import ConfigError, TrainingDiverged
from evgrid.evidential import evidence_to_belief_array, percentile_reduce_array
from evgrid.grid import read_grid
from evgrid.net.losses import evidential_bayes_risk, softmax, softmax_cross_entropy
from evgrid.net.unet import UNetSpec, forward, init_params, save_checkpoint
from evgrid.sim import augment_arrays, load_manifest


@dataclass(frozen=True)
class TrainConfig:
    model: str = "ev"  # "ev" or "soft"
    lr: float = 1e-3
    batch_size: int = 8
    epochs: int = 10
    dropout: float = 0.2
    base_channels: int = 8
    seed: int = 0
    mc_samples: int = 30
    percentile: float = 10.0
    augment: bool = True

    def __post_init__(self) -> None:
        if self.model not in ("ev", "soft"):
            raise ConfigError(f"model must be 'ev' or 'soft', got {self.model!r}")
        if self.lr <= 0 or self.batch_size < 1 or self.epochs < 0 or self.mc_samples < 1:
            raise ConfigError("rates and counts must be positive")

    def unet_spec(self) -> UNetSpec:
        return UNetSpec(
            in_channels=2,
            out_channels=3 if self.model == "soft" else 2,
            base_channels=self.base_channels,
            dropout=self.dropout,
        )


def load_split(dataset_dir, split: str):
    """Load one dataset split into memory.

    Returns (images (N,2,H,W) f32, targets (N,3,H,W) f32,
    masks (N,H,W) f32, sample ids).
    """
    manifest = load_manifest(dataset_dir)
    ids = manifest["splits"][split]
    root = Path(dataset_dir)
    images, targets, masks = [], [], []
    for sid in ids:
        sdir = root / "samples" / sid
        images.append(read_grid(sdir / "radar.grid").data.astype(np.float32))
        targets.append(read_grid(sdir / "target.grid").data.astype(np.float32))
        masks.append(read_grid(sdir / "mask.grid").data[0].astype(np.float32))
    if not ids:
        side = manifest["grid"]["side_cells"]
        return (np.zeros((0, 2, side, side), np.float32),
                np.zeros((0, 3, side, side), np.float32),
                np.zeros((0, side, side), np.float32), [])
    return np.stack(images), np.stack(targets), np.stack(masks), ids


class Adam:
    """Standard adaptive-moment optimizer over a named parameter dict."""

    def __init__(self, params: dict[str, np.ndarray], lr: float,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.t = 0
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> None:
        self.t += 1
        b1c = 1.0 - self.beta1**self.t
        b2c = 1.0 - self.beta2**self.t
        for k in sorted(params):
            g = grads[k]
            self.m[k] = self.beta1 * self.m[k] + (1.0 - self.beta1) * g
            self.v[k] = self.beta2 * self.v[k] + (1.0 - self.beta2) * np.square(g)
            params[k] -= (self.lr * (self.m[k] / b1c)
                          / (np.sqrt(self.v[k] / b2c) + self.eps)).astype(params[k].dtype)


def _batch_loss(params, spec: UNetSpec, x, target, model: str, dropout_rng):
    out, leaves = forward(params, spec, x, dropout_rng=dropout_rng)
    if model == "soft":
        loss = softmax_cross_entropy(out, target)
    else:
        from evgrid.net.tensor import square

        loss = evidential_bayes_risk(square(out), target)
    return loss, leaves


def train_step(params, spec: UNetSpec, x, target, model: str, opt: Adam, dropout_rng) -> float:
    loss, leaves = _batch_loss(params, spec, x, target, model, dropout_rng)
    loss.backward()
    value = float(loss.data)
    if not np.isfinite(value):
        raise TrainingDiverged(f"non-finite training loss: {value}")
    opt.step(params, {k: leaves[k].grad for k in params})
    return value


def eval_loss(params, spec: UNetSpec, x, target, model: str, batch_size: int = 16) -> float:
    total, n = 0.0, 0
    for i in range(0, len(x), batch_size):
        loss, _ = _batch_loss(params, spec, x[i:i + batch_size], target[i:i + batch_size],
                              model, dropout_rng=None)
        total += float(loss.data) * len(x[i:i + batch_size])
        n += len(x[i:i + batch_size])
    return total / max(n, 1)


def train(dataset_dir, cfg: TrainConfig, out_dir=None):
    """Train one model on the dataset's train split.

    Seeded and reproducible; logs per-epoch train/val loss. When ``out_dir``
    is given, writes checkpoint.ckpt and metrics.csv there.

    Returns (params, unet spec, metrics rows [(epoch, split, loss), ...]).
    """
    spec = cfg.unet_spec()
    rng = np.random.default_rng(cfg.seed)
    params = init_params(spec, rng)
    opt = Adam(params, lr=cfg.lr)
    x_train, t_train, _m, _ids = load_split(dataset_dir, "train")
    x_val, t_val, _mv, _idsv = load_split(dataset_dir, "val")
    if len(x_train) == 0:
        raise ConfigError("train split is empty")

    metrics: list[tuple[int, str, float]] = []
    for epoch in range(cfg.epochs):
        order = rng.permutation(len(x_train))
        for i in range(0, len(order), cfg.batch_size):
            idx = order[i:i + cfg.batch_size]
            xb, tb = x_train[idx], t_train[idx]
            if cfg.augment:
                xs, ts = [], []
                for j in range(len(idx)):
                    k_rot = int(rng.integers(0, 4))
                    flips = rng.integers(0, 2, size=2)
                    xa, ta = augment_arrays([xb[j], tb[j]], k_rot, bool(flips[0]), bool(flips[1]))
                    xs.append(xa)
                    ts.append(ta)
                xb, tb = np.stack(xs), np.stack(ts)
            try:
                train_step(params, spec, xb, tb, cfg.model, opt, dropout_rng=rng)
            except TrainingDiverged as exc:
                raise TrainingDiverged(f"epoch {epoch}, batch {i // cfg.batch_size}: {exc}") from exc
        metrics.append((epoch, "train", eval_loss(params, spec, x_train, t_train, cfg.model)))
        if len(x_val):
            metrics.append((epoch, "val", eval_loss(params, spec, x_val, t_val, cfg.model)))
        if out_dir is not None:
            save_checkpoint(Path(out_dir) / "checkpoint.ckpt", params, spec,
                            seed=cfg.seed, epoch=epoch)
    if out_dir is not None:
        write_metrics(Path(out_dir) / "metrics.csv", metrics)
    return params, spec, metrics


def write_metrics(path, metrics) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["epoch", "split", "loss"])
        for epoch, split, loss in metrics:
            writer.writerow([epoch, split, f"{loss:.8f}"])


def mc_predict(params, spec: UNetSpec, x: np.ndarray, n_samples: int, mode: str,
               rng: np.random.Generator, percentile: float = 10.0) -> np.ndarray:
    """Monte-Carlo dropout prediction for one input image (2, H, W).

    mode "ev": mean evidence over samples; "ev-s": nearest-rank percentile
    of the evidence samples; "soft": mean pre-softmax output through the
    softmax. Returns a (3, H, W) float64 array of (b_f, b_o, u).
    """
    if mode not in ("ev", "ev-s", "soft"):
        raise ConfigError(f"unknown prediction mode {mode!r}")
    if (mode == "soft") != (spec.out_channels == 3):
        raise ConfigError(f"mode {mode!r} incompatible with a {spec.out_channels}-channel head")
    if n_samples < 1:
        raise ConfigError("need at least one MC sample")
    xb = x[None].astype(np.float32)
    samples = []
    for _ in range(n_samples):
        out, _ = forward(params, spec, xb, dropout_rng=rng)
        samples.append(out.data[0].astype(np.float64))
    stack = np.stack(samples)  # (N, C, H, W)
    if mode == "soft":
        return softmax(stack.mean(axis=0), axis=0)
    evidence = np.square(stack)
    if mode == "ev":
        reduced = evidence.mean(axis=0)
    else:
        reduced = percentile_reduce_array(evidence, percentile, axis=0)
    return evidence_to_belief_array(reduced, axis=0, k=2)
