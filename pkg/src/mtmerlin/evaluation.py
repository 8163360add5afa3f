"""Quality metrics and experiment protocols against simulator ground truth."""
from __future__ import annotations

import csv
import hashlib
import io
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .core import as_rng
from .errors import DegeneratePeak, NonPositiveInput, OutOfBounds, ShapeMismatch

PSNR_MAX = 999.0  # reported for a perfect estimate


def psnr_log(estimate, truth, peak="auto"):
    """PSNR (dB) between log-reflectivities; ``peak='auto'`` uses the truth's log range."""
    est = np.asarray(estimate, dtype=np.float64)
    ref = np.asarray(truth, dtype=np.float64)
    if est.shape != ref.shape:
        raise ShapeMismatch(f"{est.shape} vs {ref.shape}")
    if np.any(est <= 0) or np.any(ref <= 0):
        raise NonPositiveInput("PSNR on log-reflectivities needs strictly positive inputs")
    return psnr_from_logs(np.log(est), np.log(ref), peak)


def psnr_from_logs(log_est, log_ref, peak="auto"):
    if isinstance(peak, str):
        if peak != "auto":
            raise ValueError(f"unknown peak mode {peak!r}")
        peak = float(log_ref.max() - log_ref.min())
        if peak == 0:
            raise DegeneratePeak("truth has no dynamic range; pass an explicit peak")
    mse = float(np.mean((log_est - log_ref) ** 2))
    if mse == 0:
        return PSNR_MAX
    return 10 * math.log10(peak ** 2 / mse)


def bias_variance(estimates, truth):
    """Per-pixel squared bias and unbiased variance of log-estimates."""
    if len(estimates) < 2:
        raise ValueError("at least two estimates are required")
    logs = np.log(np.stack([np.asarray(e, dtype=np.float64) for e in estimates]))
    ref = np.log(np.asarray(truth, dtype=np.float64))
    if logs.shape[1:] != ref.shape:
        raise ShapeMismatch(f"estimates {logs.shape[1:]} vs truth {ref.shape}")
    # deviations from the first estimate keep identical estimates exactly unbiased
    dev = logs - logs[0]
    mean = logs[0] + dev.mean(axis=0)
    return (mean - ref) ** 2, dev.var(axis=0, ddof=1)


@dataclass(frozen=True)
class NestedSets:
    order: tuple      # permutation of the non-reference dates
    ref: int

    def prefix(self, i):
        return self.order[:i]

    def __len__(self):
        return len(self.order)


def nested_sets(available, ref, max_extra, rng) -> NestedSets:
    """Random order of non-reference dates; every smaller set is a prefix of a larger one."""
    others = [int(t) for t in available if int(t) != ref]
    if max_extra > len(others):
        raise ValueError(f"max_extra={max_extra} exceeds the {len(others)} available dates")
    g = as_rng(rng).generator()
    order = tuple(others[i] for i in g.permutation(len(others))[:max_extra])
    return NestedSets(order, int(ref))


def line_profile(img, p0, p1):
    """Bilinear samples at unit spacing from p0 to p1 (row, col), endpoints included."""
    img = np.asarray(img, dtype=np.float64)
    h, w = img.shape
    (r0, c0), (r1, c1) = p0, p1
    for r, c in (p0, p1):
        if not (0 <= r <= h - 1 and 0 <= c <= w - 1):
            raise OutOfBounds(f"point ({r}, {c}) outside {h}x{w} image")
    length = math.hypot(r1 - r0, c1 - c0)
    n = int(math.floor(length + 1e-9)) + 1
    s = np.arange(n) / length if length > 0 else np.zeros(1)
    if length > 0 and s[-1] < 1:
        s = np.append(s, 1.0)
    rr = r0 + s * (r1 - r0)
    cc = c0 + s * (c1 - c0)
    i0 = np.clip(np.floor(rr).astype(int), 0, h - 2) if h > 1 else np.zeros(len(rr), int)
    j0 = np.clip(np.floor(cc).astype(int), 0, w - 2) if w > 1 else np.zeros(len(cc), int)
    fr = rr - i0
    fc = cc - j0
    i1 = np.minimum(i0 + 1, h - 1)
    j1 = np.minimum(j0 + 1, w - 1)
    return ((1 - fr) * (1 - fc) * img[i0, j0] + (1 - fr) * fc * img[i0, j1]
            + fr * (1 - fc) * img[i1, j0] + fr * fc * img[i1, j1])


def config_hash(config) -> str:
    """Stable short hash of a configuration (dict or text document)."""
    if not isinstance(config, (str, bytes)):
        config = json.dumps(config, sort_keys=True, default=str)
    if isinstance(config, str):
        config = config.encode()
    return hashlib.sha256(config).hexdigest()[:16]


BOX_COLUMNS = ("label", "n", "min", "q1", "median", "q3", "max")


def box_stats(values):
    v = np.asarray(values, dtype=np.float64)
    return dict(n=len(v), min=float(v.min()), q1=float(np.percentile(v, 25)),
                median=float(np.median(v)), q3=float(np.percentile(v, 75)), max=float(v.max()))


@dataclass
class EvalReport:
    rows: list = field(default_factory=list)   # dicts with label/location/draw/realization/psnr
    gamma_bar: dict = field(default_factory=dict)       # label -> mean coherence incl. diagonal
    gamma_offdiag: dict = field(default_factory=dict)   # label -> mean off-diagonal coherence
    bias2: dict = field(default_factory=dict)           # label -> map
    variance: dict = field(default_factory=dict)
    loss_curves: dict = field(default_factory=dict)
    config_hash: str = ""

    def labels(self):
        seen = []
        for r in self.rows:
            if r["label"] not in seen:
                seen.append(r["label"])
        return seen

    def psnr(self, label):
        return [r["psnr"] for r in self.rows if r["label"] == label]

    def median(self, label):
        return float(np.median(self.psnr(label)))

    def summary(self):
        return {lab: box_stats(self.psnr(lab)) for lab in self.labels()}

    ROW_COLUMNS = ("label", "location", "draw", "realization", "psnr")

    def rows_csv(self):
        buf = io.StringIO()
        buf.write(f"# config_hash={self.config_hash}\n")
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(self.ROW_COLUMNS)
        for r in self.rows:
            wr.writerow([r["label"], r["location"], r["draw"], r["realization"], f"{r['psnr']:.6f}"])
        return buf.getvalue()

    def summary_csv(self):
        buf = io.StringIO()
        buf.write(f"# config_hash={self.config_hash}\n")
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(BOX_COLUMNS + ("gamma_bar", "gamma_offdiag"))
        for lab, st in self.summary().items():
            extra = [f"{d[lab]:.6f}" if lab in d else "" for d in (self.gamma_bar, self.gamma_offdiag)]
            wr.writerow([lab, st["n"]] + [f"{st[k]:.6f}" for k in BOX_COLUMNS[2:]] + extra)
        return buf.getvalue()
