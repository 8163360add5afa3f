"""Spectrum recentering and pairwise temporal whitening against the reference date.

Coherence convention: ``gamma_i = E[b_ref b_i^*] / sqrt(r_i r_ref)`` where
``b = z - d`` is the background (speckle) component. With this convention
subtracting ``sqrt(r_i / r_ref) * gamma_i^* * b_ref`` from ``b_i`` removes
exactly the part of date i that is correlated with the reference.
"""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .core import ComplexStack
from .errors import CoherenceSaturation, DegenerateSpectrum, ShapeMismatch
from .scene import ramp_phase

log = logging.getLogger(__name__)

GUARD = 1e-3
# below this normalised first-moment magnitude an axis has no spectral peak
FLAT_SPECTRUM = 0.1


@dataclass(frozen=True)
class SpectralShift:
    fx: float = 0.0
    fy: float = 0.0
    phase0: float = 0.0

    def __post_init__(self):
        if abs(self.fx) > 0.5 or abs(self.fy) > 0.5:
            raise ValueError(f"spectral shift ({self.fx}, {self.fy}) outside [-0.5, 0.5]")


@dataclass
class CoherenceMaps:
    gamma: np.ndarray   # complex, |gamma| <= 1
    r_i: np.ndarray
    r_ref: np.ndarray


@dataclass
class WhitenedStack:
    data: ComplexStack
    ref_index: int
    maps: dict = field(default_factory=dict)       # date -> CoherenceMaps
    d_hat: np.ndarray | None = None                # (T, H, W) complex
    shift: SpectralShift = SpectralShift()
    whitened: bool = False
    n_clamped: int = 0

    @property
    def T(self):
        return self.data.T

    def planes(self):
        return self.data.planes()

    @property
    def ref_plane(self):
        return self.planes()[self.ref_index]


def _axis_centroid(img, axis):
    """Circular centroid of the power spectrum along one axis, in cycles per sample.

    The first trigonometric moment of the power spectrum equals the lag-1
    autocorrelation, which is summed here over non-wrapping pixel pairs only:
    the pair across the image border carries a phase jump whenever the ramp is
    not periodic on the grid.
    """
    a = np.moveaxis(img, axis, -1)
    total = float(np.sum(np.abs(a) ** 2))
    m = np.sum(a[..., 1:] * np.conj(a[..., :-1])) / total
    if abs(m) < FLAT_SPECTRUM:
        return 0.0
    return float(np.angle(m) / (2 * np.pi))


def estimate_spectral_shift(img) -> SpectralShift:
    """Circular centroid of the (date-summed) power spectrum, per axis."""
    img = np.asarray(img)
    if img.shape[-1] < 8 or img.shape[-2] < 8:
        raise ValueError("spectral shift estimation needs at least 8x8 pixels")
    if not np.any(img):
        raise DegenerateSpectrum("image has zero total power")
    return SpectralShift(_axis_centroid(img, -1), _axis_centroid(img, -2), 0.0)


def recenter_spectrum(stack: ComplexStack, shift: SpectralShift) -> ComplexStack:
    """Multiply every date by the same conjugate ramp (pure phase operation)."""
    if shift.fx == 0 and shift.fy == 0 and shift.phase0 == 0:
        return ComplexStack.from_planes(stack.planes().copy(), stack.meta)
    planes = stack.planes()
    ramp = np.exp(-1j * ramp_phase(planes.shape[1:], shift.fx, shift.fy, shift.phase0))
    return ComplexStack.from_planes(planes * ramp, stack.meta)


def detect_dominant_scatterers(img, quantile=0.999):
    """Complex map of bright strict local maxima above an intensity quantile."""
    if not 0 < quantile < 1:
        raise ValueError("quantile must lie in (0, 1)")
    img = np.asarray(img)
    intensity = np.abs(img) ** 2
    thr = np.quantile(intensity, quantile)
    mask = (intensity > thr) & _kernels.strict_local_max(intensity)
    return np.where(mask, img, 0).astype(np.complex128)


def estimate_coherence_pair(z_i, z_ref, d_i=None, d_ref=None, window=7) -> CoherenceMaps:
    """Boxcar multilook coherence between the background parts of two dates."""
    if window < 3 or window % 2 == 0:
        raise ValueError("coherence window must be an odd integer >= 3")
    z_i = np.asarray(z_i, dtype=np.complex128)
    z_ref = np.asarray(z_ref, dtype=np.complex128)
    if z_i.shape != z_ref.shape:
        raise ShapeMismatch(f"pair shapes differ: {z_i.shape} vs {z_ref.shape}")
    b_i = z_i - (0 if d_i is None else d_i)
    b_ref = z_ref - (0 if d_ref is None else d_ref)
    half = window // 2
    cross = _kernels.box_sum(b_ref * b_i.conj(), half)
    p_i = _kernels.box_sum(np.abs(b_i) ** 2, half)
    p_ref = _kernels.box_sum(np.abs(b_ref) ** 2, half)
    den = np.sqrt(p_i * p_ref)
    with np.errstate(invalid="ignore", divide="ignore"):
        gamma = np.where(den > 0, cross / np.where(den > 0, den, 1), 0)
    # Cauchy-Schwarz holds exactly; trim round-off overshoot
    mag = np.abs(gamma)
    gamma = np.where(mag > 1, gamma / np.maximum(mag, 1e-300), gamma)
    counts = _kernels.box_sum(np.ones(z_i.shape), half)
    tiny = np.finfo(np.float64).tiny
    return CoherenceMaps(gamma, np.maximum(p_i / counts, tiny), np.maximum(p_ref / counts, tiny))


def whiten_pair(z_i, z_ref, d_i, d_ref, maps: CoherenceMaps, guard=GUARD):
    """Whitened date i. Returns (z_i_whitened, number of clamped pixels).

    The reference date is never modified; callers keep ``z_ref`` as is.
    """
    z_i = np.asarray(z_i)
    z_ref = np.asarray(z_ref)
    d_i = np.zeros_like(z_i) if d_i is None else d_i
    d_ref = np.zeros_like(z_ref) if d_ref is None else d_ref
    gamma = np.asarray(maps.gamma, dtype=np.complex128)
    mag = np.abs(gamma)
    limit = 1.0 - guard
    over = mag >= limit
    n_clamped = int(over.sum())
    if n_clamped:
        warnings.warn(f"{n_clamped} coherence values clamped to {limit}", CoherenceSaturation, stacklevel=2)
        gamma = np.where(over, gamma * (limit / np.maximum(mag, 1e-300)), gamma)
        mag = np.minimum(mag, limit)
    tau_w = 1.0 / np.sqrt(1.0 - mag ** 2)
    ratio = np.sqrt(maps.r_i / maps.r_ref)
    out = tau_w * z_i + (1 - tau_w) * d_i - ratio * tau_w * gamma.conj() * (z_ref - d_ref)
    return out, n_clamped


def preprocess_stack(stack: ComplexStack, ref_index=0, whiten=True, coh_window=7,
                     ds_quantile=None, d_hat=None, oracle_maps=None, center=True,
                     stage_log=None) -> WhitenedStack:
    """Center, detect, interfere, whiten, reinsert.

    ``d_hat``: externally supplied (T, H, W) scatterer maps; otherwise they are
    detected when ``ds_quantile`` is given and taken as zero when it is None.
    ``oracle_maps``: date -> CoherenceMaps to bypass estimation.
    ``stage_log``: optional callable receiving one dict per pipeline stage.
    """
    emit = stage_log or (lambda rec: log.info(" ".join(f"{k}={v}" for k, v in rec.items())))
    planes0 = stack.planes()
    T = planes0.shape[0]
    if not 0 <= ref_index < T:
        raise ValueError(f"ref_index {ref_index} outside 0..{T - 1}")
    shift = estimate_spectral_shift(planes0[ref_index]) if center else SpectralShift()
    centered = recenter_spectrum(stack, shift)
    emit({"stage": "center", "fx": f"{shift.fx:.6f}", "fy": f"{shift.fy:.6f}"})
    planes = centered.planes()
    if not whiten:
        return WhitenedStack(centered, ref_index, shift=shift,
                             d_hat=None if d_hat is None else np.asarray(d_hat))

    if d_hat is None:
        if ds_quantile is None:
            d_hat = np.zeros_like(planes)
        else:
            d_hat = np.stack([detect_dominant_scatterers(p, ds_quantile) for p in planes])
    else:
        d_hat = np.asarray(d_hat, dtype=np.complex128)
        if d_hat.shape != planes.shape:
            raise ShapeMismatch("d_hat must match the stack shape")
    emit({"stage": "detect", "n_scatterers": int(np.count_nonzero(d_hat))})

    maps = {}
    for t in range(T):
        if t == ref_index:
            continue
        if oracle_maps is not None:
            maps[t] = oracle_maps[t]
        else:
            maps[t] = estimate_coherence_pair(planes[t], planes[ref_index], d_hat[t], d_hat[ref_index], coh_window)
    mean_coh = float(np.mean([np.abs(m.gamma).mean() for m in maps.values()])) if maps else 0.0
    emit({"stage": "interfere", "pairs": len(maps), "mean_abs_gamma": f"{mean_coh:.6f}"})

    out = planes.copy()
    n_clamped = 0
    with warnings.catch_warnings(record=True):
        warnings.simplefilter("always", CoherenceSaturation)
        for t, m in maps.items():
            out[t], n = whiten_pair(planes[t], planes[ref_index], d_hat[t], d_hat[ref_index], m)
            n_clamped += n
    if n_clamped:
        warnings.warn(f"{n_clamped} coherence values clamped in total", CoherenceSaturation, stacklevel=2)
    emit({"stage": "whiten", "clamped": n_clamped})
    # scatterers are reinserted by the (1 - tau_w) d_i term of the whitening
    emit({"stage": "reinsert", "dates": T - 1})
    assert np.array_equal(out[ref_index], planes[ref_index])
    return WhitenedStack(ComplexStack.from_planes(out, stack.meta), ref_index, maps, d_hat,
                         shift, True, n_clamped)
