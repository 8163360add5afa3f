"""Simulated experiments: PSNR versus number of dates and versus coherence."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, replace

import numpy as np

from .core import ComplexStack, RngHandle
from .evaluation import EvalReport, bias_variance, config_hash, nested_sets, psnr_log
from .nn import ArchSpec, TrainConfig, despeckle, train
from .preprocess import WhitenedStack, preprocess_stack
from .scene import (ExponentialCoherence, average_coherence, coherence_matrix,
                    offdiagonal_coherence, piecewise_scene, synthesize_stack, tau_for_coherence)


@dataclass
class ExperimentConfig:
    # scene
    size: int = 128
    dates: int = 8
    n_classes: int = 3
    dynamic_db: float = 10.0
    change_fraction: float = 0.2
    cell_size: float = 6.0
    n_train: int = 6
    n_locations: int = 2
    # network / training
    depth: int = 2
    base_width: int = 16
    steps: int = 1500
    patch_size: int = 32
    batch_size: int = 8
    lr: float = 1e-3
    lr_drop_at: float = 0.8          # fraction of steps after which lr /= 10
    # evaluation
    draws: int = 2
    realizations: int = 2
    t_values: tuple = (1, 2, 4, 8)
    coherence_targets: tuple = (0.05, 0.2, 0.6)
    whiten_targets: tuple = (0.6,)
    coherence_measure: str = "offdiagonal"   # or "average" (diagonal included)
    coherence_ref: int = 1
    coh_window: int = 7
    seed: int = 7

    def __post_init__(self):
        self.t_values = tuple(int(t) for t in self.t_values)
        self.coherence_targets = tuple(float(g) for g in self.coherence_targets)
        self.whiten_targets = tuple(float(g) for g in self.whiten_targets)
        if self.coherence_measure not in ("offdiagonal", "average"):
            raise ValueError(f"unknown coherence measure {self.coherence_measure!r}")
        if max(self.t_values) > self.dates:
            raise ValueError("t_values exceed the number of simulated dates")

    @property
    def peak(self):
        """Shared PSNR peak: the log-range of the reflectivity classes."""
        return self.dynamic_db / 10 * math.log(10)

    def hash(self):
        return config_hash(asdict(self))

    def train_config(self):
        return TrainConfig(patch_size=self.patch_size, batch_size=self.batch_size, epochs=self.steps,
                           patches_per_epoch=self.batch_size, seed=self.seed,
                           lr_schedule=((0, self.lr), (max(1, int(self.steps * self.lr_drop_at)), self.lr / 10)))


def _scenes(cfg, T, ref, coherence, stream):
    root = RngHandle(cfg.seed)
    kw = dict(n_classes=cfg.n_classes, dynamic_db=cfg.dynamic_db, change_fraction=cfg.change_fraction,
              cell_size=cfg.cell_size, ref_index=ref, coherence=coherence)
    shape = (cfg.size, cfg.size)
    train_s = [piecewise_scene(shape, T, root.child(stream, 1, i), **kw) for i in range(cfg.n_train)]
    test_s = [piecewise_scene(shape, T, root.child(stream, 2, i), **kw) for i in range(cfg.n_locations)]
    return train_s, test_s


def _prepare(z, ref, dates, whiten, cfg):
    sub = ComplexStack.from_planes(z.planes()[list(dates)], z.meta)
    new_ref = list(dates).index(ref)
    if whiten:
        return preprocess_stack(sub, new_ref, whiten=True, coh_window=cfg.coh_window,
                                stage_log=lambda rec: None)
    return WhitenedStack(sub, new_ref)


def _train_model(cfg, scenes, ref, n_aux, whiten, stream):
    """Fresh speckle every step; each training stack draws its own auxiliary dates."""
    root = RngHandle(cfg.seed)
    T = scenes[0].T
    others = np.array([t for t in range(T) if t != ref])

    def dataset(epoch):
        out = []
        for i, sc in enumerate(scenes):
            z, _ = synthesize_stack(sc, root.child(stream, 3, epoch, i))
            g = root.child(stream, 4, epoch, i).generator()
            aux = [int(t) for t in g.permutation(others)[:n_aux]]
            out.append(_prepare(z, ref, [ref] + aux, whiten, cfg))
        return out

    arch = ArchSpec(in_channels=1 + n_aux, depth=cfg.depth, base_width=cfg.base_width)
    return train(dataset, cfg.train_config(), root.child(stream, 5), arch=arch)


def _evaluate(cfg, report, label, result, scenes, ref, n_aux, whiten, stream):
    root = RngHandle(cfg.seed)
    T = scenes[0].T
    first = []
    for loc, sc in enumerate(scenes):
        for draw in range(cfg.draws):
            ns = nested_sets(range(T), ref, T - 1, root.child(stream, 6, loc, draw))
            dates = [ref] + list(ns.prefix(n_aux))
            for real in range(cfg.realizations):
                z, truth = synthesize_stack(sc, root.child(stream, 7, loc, real))
                est = despeckle(result.params, _prepare(z, ref, dates, whiten, cfg))
                target = truth.target(ref)
                report.rows.append(dict(label=label, location=loc, draw=draw, realization=real,
                                        psnr=psnr_log(est, target, peak=cfg.peak)))
                if loc == 0 and draw == 0:
                    first.append((est, target))
    if len(first) >= 2:
        b2, var = bias_variance([e for e, _ in first], first[0][1])
        report.bias2[label] = b2
        report.variance[label] = var
    report.loss_curves[label] = list(result.loss_curve)


def run_psnr_vs_T(cfg: ExperimentConfig, on_label=None) -> EvalReport:
    """Networks trained identically for each number of dates, evaluated on nested date sets."""
    report = EvalReport(config_hash=cfg.hash())
    ref = 0
    train_s, test_s = _scenes(cfg, cfg.dates, ref, None, stream=0)
    for T in cfg.t_values:
        label = f"T={T}"
        # common random numbers: every label sees the same scenes, speckle and date draws
        res = _train_model(cfg, train_s, ref, T - 1, False, stream=10)
        _evaluate(cfg, report, label, res, test_s, ref, T - 1, False, 10)
        report.gamma_bar[label] = 1.0 / cfg.dates
        if on_label:
            on_label(label, report)
    return report


def coherence_grid(cfg: ExperimentConfig, T=3):
    """(target, tau, average coherence, off-diagonal coherence) for each requested level."""
    measure = offdiagonal_coherence if cfg.coherence_measure == "offdiagonal" else average_coherence
    out = []
    for g in sorted(set(cfg.coherence_targets) | set(cfg.whiten_targets)):
        tau = tau_for_coherence(g, np.arange(T, dtype=float), measure)
        gamma = coherence_matrix(ExponentialCoherence.regular(T, tau))
        out.append((g, tau, average_coherence(gamma), offdiagonal_coherence(gamma)))
    return out


def run_psnr_vs_coherence(cfg: ExperimentConfig, T=3, on_label=None) -> EvalReport:
    """Three-date networks trained and tested at several coherence levels, plus a mono-date baseline."""
    report = EvalReport(config_hash=cfg.hash())
    ref = cfg.coherence_ref
    grid = coherence_grid(cfg, T)
    # mono-date baseline on uncorrelated data (coherence is irrelevant with no extra date)
    train_s, test_s = _scenes(cfg, T, ref, None, stream=100)
    res = _train_model(cfg, train_s, ref, 0, False, stream=101)
    _evaluate(cfg, report, "T=1", res, test_s, ref, 0, False, 101)
    report.gamma_bar["T=1"] = 1.0
    report.gamma_offdiag["T=1"] = 0.0
    if on_label:
        on_label("T=1", report)
    for g, tau, gbar, goff in grid:
        coh = ExponentialCoherence.regular(T, tau)
        tr = [replace(sc, coherence=coh) for sc in train_s]
        te = [replace(sc, coherence=coh) for sc in test_s]
        modes = []
        if g in cfg.coherence_targets:
            modes.append(False)
        if g in cfg.whiten_targets:
            modes.append(True)
        for whiten in modes:
            label = f"gbar={g:.3f}" + ("+whiten" if whiten else "")
            res = _train_model(cfg, tr, ref, T - 1, whiten, 101)
            _evaluate(cfg, report, label, res, te, ref, T - 1, whiten, 101)
            report.gamma_bar[label] = gbar
            report.gamma_offdiag[label] = goff
            if on_label:
                on_label(label, report)
    return report
