"""Self-supervised multi-temporal MERLIN objective.

The estimator sees the real part of the reference date plus auxiliary
channels built only from the other dates, and is supervised by the imaginary
part (and symmetrically). Outputs are log-intensities ``w = log u``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NonFinite, ShapeMismatch

EPS_LOG = 1e-10
ENCODINGS = ("log-intensity", "reim")


@dataclass
class InputSets:
    a_ref: np.ndarray
    b_ref: np.ndarray
    aux: list            # planes derived from the non-reference dates only
    ref_index: int
    aux_dates: tuple = ()
    encoding: str = "log-intensity"

    @property
    def n_channels(self):
        return 1 + len(self.aux)

    def channels_a(self):
        """Inputs of the branch supervised by ``b_ref``: (H, W, C)."""
        return np.stack([self.a_ref, *self.aux], axis=-1)

    def channels_b(self):
        return np.stack([self.b_ref, *self.aux], axis=-1)


def aux_channels(planes, encoding="log-intensity", eps_log=EPS_LOG):
    out = []
    for z in planes:
        if encoding == "log-intensity":
            out.append(np.log(np.abs(z) ** 2 + eps_log))
        elif encoding == "reim":
            out.extend([z.real.copy(), z.imag.copy()])
        else:
            raise ValueError(f"unknown auxiliary encoding {encoding!r}")
    return out


def channels_per_date(encoding):
    return 2 if encoding == "reim" else 1


def build_input_sets(wstack, aux_dates=None, encoding="log-intensity", eps_log=EPS_LOG) -> InputSets:
    """Split the reference date and encode the other dates as auxiliary channels.

    ``aux_dates`` restricts (and orders) the auxiliary dates; default is every
    non-reference date in increasing order.
    """
    planes = wstack.planes()
    ref = wstack.ref_index
    if aux_dates is None:
        aux_dates = tuple(t for t in range(planes.shape[0]) if t != ref)
    aux_dates = tuple(int(t) for t in aux_dates)
    if ref in aux_dates:
        raise ValueError("the reference date cannot be an auxiliary input")
    zref = planes[ref]
    aux = aux_channels([planes[t] for t in aux_dates], encoding, eps_log)
    return InputSets(zref.real.copy(), zref.imag.copy(), aux, ref, aux_dates, encoding)


@dataclass
class LossValue:
    total: float
    per_pixel: np.ndarray | None = None


def merlin_loss(target, w, per_pixel=False) -> LossValue:
    """sum_k 1/2 w_k + target_k^2 exp(-w_k), i.e. the MERLIN loss at u = exp(w)."""
    target = np.asarray(target)
    w = np.asarray(w)
    if target.shape != w.shape:
        raise ShapeMismatch(f"target {target.shape} vs output {w.shape}")
    with np.errstate(over="ignore"):
        terms = 0.5 * w + target ** 2 * np.exp(-w)
    total = float(terms.sum())
    if not np.isfinite(total):
        raise NonFinite("MERLIN loss overflowed")
    return LossValue(total, terms if per_pixel else None)


def merlin_loss_grad(target, w):
    """d loss / d w = 1/2 - target^2 exp(-w)."""
    target = np.asarray(target)
    w = np.asarray(w)
    if target.shape != w.shape:
        raise ShapeMismatch(f"target {target.shape} vs output {w.shape}")
    return 0.5 - target ** 2 * np.exp(-w)


def optimal_outputs(r_tilde_ref, d_hat_ref):
    """Expected-loss minimisers (u* for the branch fed with a_ref, v* for b_ref).

    The a-branch is supervised by b_ref, whose second moment is
    r~/2 + Im(d~)^2, hence u* = r~ + 2 Im(d~)^2; symmetrically for v*.
    """
    r = np.asarray(r_tilde_ref, dtype=np.float64)
    d = np.asarray(d_hat_ref, dtype=np.complex128)
    if np.any(r <= 0):
        raise ValueError("r_tilde must be strictly positive")
    return r + 2 * d.imag ** 2, r + 2 * d.real ** 2


def combine_estimates(u, v):
    u = np.asarray(u)
    v = np.asarray(v)
    if u.shape != v.shape:
        raise ShapeMismatch(f"{u.shape} vs {v.shape}")
    return 0.5 * (u + v)


def fit_scalar_output(target, w0=0.0, tol=1e-12, max_iter=200):
    """Minimise the mean loss over draws of ``target`` for one shared scalar w.

    Damped Newton iterations on the empirical objective; returns u = exp(w).
    Used as a network-free check of the expected-loss minimisers.
    """
    m = float(np.mean(np.asarray(target, dtype=np.float64) ** 2))
    if m <= 0:
        raise ValueError("targets must not be identically zero")
    w = float(w0)
    for _ in range(max_iter):
        g = 0.5 - m * np.exp(-w)
        h = m * np.exp(-w)
        step = float(np.clip(g / h, -2.0, 2.0))
        w -= step
        if abs(step) < tol:
            break
    return float(np.exp(w))
