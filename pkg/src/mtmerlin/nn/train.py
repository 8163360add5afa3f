"""Self-supervised training and inference of the despeckling estimator."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from ..core import as_rng
from ..errors import Diverged, ShapeMismatch
from ..loss import build_input_sets, channels_per_date, combine_estimates
from .optim import Adam, lr_at
from .tape import backward
from .unet import ArchSpec, EstimatorParams, forward, init_params

log = logging.getLogger(__name__)

TABLE_SCHEDULE = ((0, 1e-3), (10, 1e-4), (910, 1e-5))


@dataclass
class TrainConfig:
    patch_size: int = 256
    batch_size: int = 8
    epochs: int = 1000
    lr_schedule: tuple = TABLE_SCHEDULE
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0
    patches_per_epoch: int | None = None   # default: tile every stack once
    aux_dates: tuple | None = None         # default: every non-reference date
    encoding: str = "log-intensity"
    dtype: str = "float32"

    def __post_init__(self):
        starts = [s for s, _ in self.lr_schedule]
        if starts != sorted(starts) or len(set(starts)) != len(starts):
            raise ValueError("learning-rate breakpoints must be strictly ascending")
        if any(lr <= 0 for _, lr in self.lr_schedule):
            raise ValueError("learning rates must be positive")
        if self.patch_size < 1 or self.batch_size < 1 or self.epochs < 1:
            raise ValueError("patch_size, batch_size and epochs must be positive")


@dataclass
class TrainResult:
    params: EstimatorParams
    loss_curve: list = field(default_factory=list)


def _input_sets(items, cfg):
    return [build_input_sets(ws, cfg.aux_dates, cfg.encoding) for ws in items]


def normalisation(sets):
    """Per-channel (shift, scale) from a list of InputSets, plus the mean intensity."""
    ab = np.concatenate([np.concatenate([s.a_ref.ravel(), s.b_ref.ravel()]) for s in sets])
    intensity = float(np.mean(ab ** 2) * 2)
    shift = [0.0]
    scale = [1.0 / math.sqrt(intensity / 2)]
    n_aux = len(sets[0].aux)
    for c in range(n_aux):
        vals = np.concatenate([s.aux[c].ravel() for s in sets])
        sd = float(vals.std())
        shift.append(float(vals.mean()))
        scale.append(1.0 / sd if sd > 0 else 1.0)
    return np.array(shift), np.array(scale), intensity


def _sample_batches(sets, cfg, epoch, rng):
    g = rng.child(1_000_003, epoch).generator()
    p = cfg.patch_size
    if cfg.patches_per_epoch is not None:
        n_patches = cfg.patches_per_epoch
    else:
        n_patches = sum(max(1, (s.a_ref.shape[0] // p) * (s.a_ref.shape[1] // p)) for s in sets)
    picks = []
    for _ in range(n_patches):
        k = int(g.integers(len(sets)))
        h, w = sets[k].a_ref.shape
        if h < p or w < p:
            raise ShapeMismatch(f"patch size {p} exceeds stack size {h}x{w}")
        picks.append((k, int(g.integers(h - p + 1)), int(g.integers(w - p + 1))))
    for start in range(0, n_patches, cfg.batch_size):
        yield picks[start:start + cfg.batch_size]


def _batch_arrays(sets, picks, p, cache):
    xa, xb, ta, tb = [], [], [], []
    for k, y, x in picks:
        if k not in cache:
            cache[k] = (sets[k].channels_a(), sets[k].channels_b())
        ca, cb = cache[k]
        xa.append(ca[y:y + p, x:x + p])
        xb.append(cb[y:y + p, x:x + p])
        ta.append(sets[k].a_ref[y:y + p, x:x + p])
        tb.append(sets[k].b_ref[y:y + p, x:x + p])
    # branch fed with a_ref is supervised by b_ref and vice versa
    return np.concatenate([np.stack(xa), np.stack(xb)]), np.concatenate([np.stack(tb), np.stack(ta)])


def train_step(params, opt, x, target, lr):
    """One Adam step on the two-branch MERLIN objective; returns mean loss per pixel."""
    w, tape = forward(params, x)
    target = target.astype(params.dtype, copy=False)
    e = target ** 2 * np.exp(-w)
    loss = float(np.mean(0.5 * w + e))
    grad = (0.5 - e) / w.size
    opt.step(backward(tape, grad[..., None]), lr)
    return loss


def train(dataset, config: TrainConfig, rng=None, arch: ArchSpec | None = None,
          params: EstimatorParams | None = None, on_epoch=None) -> TrainResult:
    """Minimise the two-branch MERLIN objective.

    ``dataset``: list of WhitenedStack, or a callable ``epoch -> list`` that
    supplies fresh stacks (e.g. new speckle realisations) every epoch.
    """
    rng = as_rng(config.seed if rng is None else rng)
    dtype = np.dtype(config.dtype)
    static = not callable(dataset)
    items = dataset if static else dataset(0)
    sets = _input_sets(items, config)
    if len({s.n_channels for s in sets}) != 1:
        raise ShapeMismatch("all training stacks must yield the same number of input channels")
    if params is None:
        shift, scale, intensity = normalisation(sets)
        if arch is None:
            arch = ArchSpec(in_channels=sets[0].n_channels)
        if arch.in_channels != sets[0].n_channels:
            raise ShapeMismatch(f"architecture expects {arch.in_channels} channels, data has {sets[0].n_channels}")
        params = init_params(arch, rng.child(1), dtype, math.log(intensity), shift, scale, config.encoding)
    elif params.arch.in_channels != sets[0].n_channels:
        raise ShapeMismatch("initial parameters do not match the data channel count")
    if config.patch_size % params.arch.multiple:
        raise ShapeMismatch(f"patch size must be a multiple of {params.arch.multiple}")

    opt = Adam(params, config.beta1, config.beta2, config.eps)
    curve = []
    cache = {}
    for epoch in range(config.epochs):
        if not static and epoch > 0:
            sets = _input_sets(dataset(epoch), config)
            cache = {}
        lr = lr_at(config.lr_schedule, epoch)
        losses = []
        for picks in _sample_batches(sets, config, epoch, rng):
            x, target = _batch_arrays(sets, picks, config.patch_size, cache)
            losses.append(train_step(params, opt, x, target, lr))
        epoch_loss = float(np.mean(losses))
        if not math.isfinite(epoch_loss) or not all(np.all(np.isfinite(t)) for t in params.tensors.values()):
            raise Diverged(epoch)
        curve.append(epoch_loss)
        log.info("epoch=%d lr=%g loss=%.6f", epoch, lr, epoch_loss)
        if on_epoch is not None:
            on_epoch(epoch, epoch_loss)
    return TrainResult(params, curve)


def _pad_to(arr, multiple):
    h, w = arr.shape[:2]
    ph = (-h) % multiple
    pw = (-w) % multiple
    if ph == 0 and pw == 0:
        return arr
    mode = "reflect" if h > ph and w > pw else "edge"
    return np.pad(arr, ((0, ph), (0, pw), (0, 0)), mode=mode)


def check_compatible(params: EstimatorParams, sets):
    if sets.encoding != params.encoding:
        raise ShapeMismatch(f"stack encoded as '{sets.encoding}' but the model was trained on "
                            f"'{params.encoding}'; re-run with the training encoding")
    if sets.n_channels != params.arch.in_channels:
        per = channels_per_date(params.encoding)
        need = (params.arch.in_channels - 1) // per
        raise ShapeMismatch(
            f"model expects {params.arch.in_channels} input channels ({need} auxiliary dates) but the "
            f"stack provides {sets.n_channels} ({len(sets.aux_dates)} auxiliary dates); select "
            f"{need} auxiliary dates or use a model trained for {len(sets.aux_dates)}")


def predict_branches(params: EstimatorParams, sets):
    """(u, v) = (exp f(E_a), exp f(E_b)) on a full image."""
    check_compatible(params, sets)
    h, w = sets.a_ref.shape
    xa = _pad_to(sets.channels_a(), params.arch.multiple)
    xb = _pad_to(sets.channels_b(), params.arch.multiple)
    wa, _ = forward(params, xa)
    wb, _ = forward(params, xb)
    return np.exp(wa[:h, :w].astype(np.float64)), np.exp(wb[:h, :w].astype(np.float64))


def despeckle(params: EstimatorParams, wstack, aux_dates=None):
    """Average of the two branch estimates: targets r~_ref + |d~_ref|^2."""
    sets = build_input_sets(wstack, aux_dates, params.encoding)
    u, v = predict_branches(params, sets)
    return combine_estimates(u, v)
