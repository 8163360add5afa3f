"""Multi-temporal SLC stack simulator.

Pipeline for each pixel k and date t::

    eps ~ Nc(I)                      uncorrelated speckle
    s(., k) = diag(sqrt r(., k)) L eps_k      with L L^H = Gamma
    z = s + d                        dominant scatterers added
    z~_t = exp(-j psi_t) Q exp(j(phi_t + psi_t)) z_t

``Q`` is circular: forward DFT, centered symmetric apodization window on a
band of width 1/oversampling, inverse DFT.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .core import ComplexStack, RngHandle, as_rng, dft2_forward, dft2_inverse
from .errors import NotPSD, ShapeMismatch

PSD_TOL = 1e-10


# ------------------------------------------------------------------ coherence

@dataclass(frozen=True)
class ExplicitCoherence:
    matrix: np.ndarray

    @property
    def T(self):
        return self.matrix.shape[0]


@dataclass(frozen=True)
class ExponentialCoherence:
    """Gamma(t_i, t_j) = exp(-|t_i - t_j| / tau); tau may be 0 or +inf."""
    dates: tuple
    tau: float

    @property
    def T(self):
        return len(self.dates)

    @classmethod
    def regular(cls, T, tau):
        return cls(tuple(float(t) for t in range(T)), float(tau))


def _check_psd(gamma):
    if gamma.ndim != 2 or gamma.shape[0] != gamma.shape[1]:
        raise ShapeMismatch(f"coherence matrix must be square, got {gamma.shape}")
    if not np.allclose(gamma, gamma.conj().T, atol=1e-12):
        raise NotPSD("coherence matrix is not Hermitian")
    eig = np.linalg.eigvalsh(gamma)
    if eig.min() < -PSD_TOL:
        raise NotPSD(f"coherence matrix has eigenvalue {eig.min():.3e} < -{PSD_TOL}")


def coherence_matrix(spec) -> np.ndarray:
    if isinstance(spec, ExponentialCoherence):
        t = np.asarray(spec.dates, dtype=np.float64)
        lag = np.abs(t[:, None] - t[None, :])
        if spec.tau == 0:
            g = (lag == 0).astype(np.float64)
        elif math.isinf(spec.tau):
            g = np.ones_like(lag)
        else:
            g = np.exp(-lag / spec.tau)
        return g.astype(np.complex128)
    if isinstance(spec, ExplicitCoherence):
        g = np.asarray(spec.matrix, dtype=np.complex128)
        _check_psd(g)
        if not np.allclose(np.diag(g), 1.0, atol=1e-12):
            raise NotPSD("coherence matrix must have a unit diagonal")
        if np.abs(g).max() > 1 + 1e-12:
            raise NotPSD("coherence entries must satisfy |gamma| <= 1")
        return g
    raise TypeError(f"unknown coherence spec {spec!r}")


def cholesky_psd(gamma) -> np.ndarray:
    """Lower-triangular L with L L^H = gamma, tolerating singular PSD input.

    Columns whose pivot falls below the PSD tolerance are zeroed, which gives
    a valid factor for rank-deficient matrices (e.g. fully coherent stacks).
    """
    g = np.asarray(gamma, dtype=np.complex128)
    _check_psd(g)
    n = g.shape[0]
    L = np.zeros_like(g)
    scale = max(1.0, float(np.abs(np.diag(g)).max()))
    for j in range(n):
        pivot = g[j, j].real - np.sum(np.abs(L[j, :j]) ** 2)
        if pivot < -PSD_TOL * scale * n:
            raise NotPSD(f"negative pivot {pivot:.3e} at column {j}")
        if pivot <= PSD_TOL * scale:
            continue
        L[j, j] = math.sqrt(pivot)
        for i in range(j + 1, n):
            L[i, j] = (g[i, j] - np.sum(L[i, :j] * L[j, :j].conj())) / L[j, j]
    return L


def average_coherence(gamma) -> float:
    g = np.asarray(gamma)
    return float(np.real(g).sum() / g.shape[0] ** 2)


def offdiagonal_coherence(gamma) -> float:
    """Mean of the T(T-1) off-diagonal coherence entries (real part)."""
    g = np.real(np.asarray(gamma))
    T = g.shape[0]
    if T < 2:
        return 0.0
    return float((g.sum() - np.trace(g)) / (T * (T - 1)))


def tau_for_coherence(target, dates, measure=average_coherence):
    """Decorrelation time giving ``measure(Gamma) == target`` (bisection on log tau)."""
    spec0 = ExponentialCoherence(tuple(dates), 0.0)
    lo_val = measure(coherence_matrix(spec0))
    if target <= lo_val:
        return 0.0
    if target >= 1.0:
        return math.inf
    lo, hi = -12.0, 12.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        val = measure(coherence_matrix(ExponentialCoherence(tuple(dates), math.exp(mid))))
        if val < target:
            lo = mid
        else:
            hi = mid
    return math.exp(0.5 * (lo + hi))


# ------------------------------------------------------------------ SAR response

class ResponseMode(enum.Enum):
    IDENTITY = "identity"
    APODIZED_OVERSAMPLED = "apodized"


@dataclass(frozen=True)
class SarResponseSpec:
    mode: ResponseMode = ResponseMode.IDENTITY
    window: str = "hamming"
    taper: float = 0.54          # raised-cosine pedestal, 1.0 = rectangular
    oversampling: tuple = (1.0, 1.0)  # (rows, cols)

    @classmethod
    def identity(cls):
        return cls()

    @classmethod
    def apodized(cls, taper=0.54, oversampling=(1.0, 1.0)):
        return cls(ResponseMode.APODIZED_OVERSAMPLED, "hamming", float(taper),
                   tuple(float(o) for o in oversampling))


def _window_1d(n, taper, oversampling):
    f = np.fft.fftfreq(n)
    band = 1.0 / oversampling
    inside = np.abs(f) <= band / 2 + 1e-12
    w = np.where(inside, taper + (1 - taper) * np.cos(2 * np.pi * f / band), 0.0)
    return np.clip(w, 0.0, None)


def transfer_function(spec: SarResponseSpec, shape) -> np.ndarray:
    """Real, even spectral window on the fftfreq grid, scaled to unit mean power."""
    h, w = shape
    if spec.mode == ResponseMode.IDENTITY:
        return np.ones((h, w))
    if spec.window not in ("hamming", "raised-cosine"):
        raise ValueError(f"unsupported window {spec.window!r}")
    win = np.outer(_window_1d(h, spec.taper, spec.oversampling[0]),
                   _window_1d(w, spec.taper, spec.oversampling[1]))
    return win / math.sqrt(np.mean(win ** 2))


def response_kernel(spec: SarResponseSpec, shape) -> np.ndarray:
    """Spatial impulse response q of Q (circular convolution kernel, origin at [0, 0])."""
    return np.fft.ifft2(transfer_function(spec, shape)).real


def apply_q(img, spec: SarResponseSpec):
    if spec.mode == ResponseMode.IDENTITY:
        return np.array(img, copy=True)
    win = transfer_function(spec, img.shape[-2:])
    return dft2_inverse(dft2_forward(img) * win)


def ramp_phase(shape, fx, fy, phase0=0.0):
    h, w = shape
    y, x = np.mgrid[0:h, 0:w]
    return 2 * np.pi * (fx * x + fy * y) + phase0


def apply_sar_response(z: ComplexStack, phi=None, psi=None, spec: SarResponseSpec = SarResponseSpec()):
    """Apply exp(-j psi_t) Q exp(j(phi_t + psi_t)) to every date.

    ``phi``: (T, H, W) phases or None. ``psi``: sequence of (fx, fy, phase0)
    per date or None.
    """
    planes = z.planes()
    T, H, W = planes.shape
    out = np.empty(planes.shape, dtype=np.complex128)
    for t in range(T):
        ph = np.zeros((H, W)) if phi is None else np.asarray(phi[t], dtype=np.float64)
        if spec.mode == ResponseMode.IDENTITY:
            out[t] = np.exp(1j * ph) * planes[t]
            continue
        ps = np.zeros((H, W)) if psi is None else ramp_phase((H, W), *psi[t])
        out[t] = np.exp(-1j * ps) * apply_q(np.exp(1j * (ph + ps)) * planes[t], spec)
    return ComplexStack.from_planes(out, z.meta)


def lowpass_reflectivity(r, spec: SarResponseSpec):
    """Diagonal of Q diag(r) Q^H, i.e. r circularly convolved with q^2."""
    r = np.asarray(r, dtype=np.float64)
    if spec.mode == ResponseMode.IDENTITY:
        return r.copy()
    q2 = response_kernel(spec, r.shape[-2:]) ** 2
    return np.fft.ifft2(np.fft.fft2(r) * np.fft.fft2(q2)).real


# ------------------------------------------------------------------ speckle

@dataclass(frozen=True)
class SpeckleDraw:
    epsilon: np.ndarray  # (T, H, W) complex128
    rng: RngHandle


def draw_speckle(T, H, W, rng) -> SpeckleDraw:
    """Circular Gaussian Nc(I) samples; date t uses stream ``rng.child(t)``."""
    rng = as_rng(rng)
    eps = np.empty((T, H, W), dtype=np.complex128)
    s = math.sqrt(0.5)
    for t in range(T):
        g = rng.child(t).generator()
        eps[t].real = g.standard_normal((H, W)) * s
        eps[t].imag = g.standard_normal((H, W)) * s
    return SpeckleDraw(eps, rng)


def correlate_speckle(eps, L, r) -> ComplexStack:
    """s(., k) = diag(sqrt r(., k)) L_k eps_k.

    ``L`` is either a shared (T, T) factor or per-pixel (H, W, T, T).
    """
    e = eps.epsilon if isinstance(eps, SpeckleDraw) else np.asarray(eps)
    r = np.asarray(r, dtype=np.float64)
    L = np.asarray(L)
    T = e.shape[0]
    if r.shape != e.shape:
        raise ShapeMismatch(f"reflectivity shape {r.shape} != speckle shape {e.shape}")
    if L.shape == (T, T):
        mixed = np.tensordot(L, e, axes=([1], [0]))
    elif L.shape == e.shape[1:] + (T, T):
        mixed = np.einsum("hwij,jhw->ihw", L, e)
    else:
        raise ShapeMismatch(f"correlating factor shape {L.shape} incompatible with T={T}")
    return ComplexStack.from_planes(np.sqrt(r) * mixed)


# ------------------------------------------------------------------ scenes

@dataclass
class SceneModel:
    r: np.ndarray                      # (T, H, W) > 0
    coherence: object                  # ExplicitCoherence | ExponentialCoherence
    d: np.ndarray | None = None        # (T, H, W) complex
    phi: np.ndarray | None = None      # (T, H, W) radians
    psi: list | None = None            # per date (fx, fy, phase0)
    sar_response: SarResponseSpec = field(default_factory=SarResponseSpec)
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.r = np.asarray(self.r, dtype=np.float64)
        if self.r.ndim != 3:
            raise ShapeMismatch("r must be (T, H, W)")
        if not np.all(self.r > 0):
            raise ValueError("reflectivities must be strictly positive")
        if self.d is not None:
            self.d = np.asarray(self.d, dtype=np.complex128)
            if self.d.shape != self.r.shape:
                raise ShapeMismatch("d must match r")
            if not np.all(np.isfinite(self.d)):
                raise ValueError("dominant scatterers must be finite")
        if self.coherence.T != self.r.shape[0]:
            raise ShapeMismatch("coherence size does not match the number of dates")
        if self.psi is not None:
            if len(self.psi) != self.r.shape[0]:
                raise ShapeMismatch("one spectral shift per date is required")
            for fx, fy, _ in self.psi:
                if abs(fx) > 0.5 or abs(fy) > 0.5:
                    raise ValueError("ramp frequencies must lie in [-0.5, 0.5]")

    @property
    def T(self):
        return self.r.shape[0]

    @property
    def shape(self):
        return self.r.shape[1:]


@dataclass
class SceneTruth:
    r_tilde: np.ndarray   # (T, H, W) low-pass reflectivities
    d_tilde: np.ndarray   # (T, H, W) low-pass dominant scatterers (complex)

    @property
    def d_intensity(self):
        return np.abs(self.d_tilde) ** 2

    def target(self, t):
        """What the despeckler estimates at date t: r~ + |d~|^2."""
        return self.r_tilde[t] + self.d_intensity[t]


def synthesize_stack(scene: SceneModel, rng):
    """Simulate an SLC stack. Returns (stack, SceneTruth)."""
    rng = as_rng(rng)
    T, (H, W) = scene.T, scene.shape
    eps = draw_speckle(T, H, W, rng)
    L = cholesky_psd(coherence_matrix(scene.coherence))
    s = correlate_speckle(eps, L, scene.r)
    z = s.planes() + (scene.d if scene.d is not None else 0)
    zt = apply_sar_response(ComplexStack.from_planes(z), scene.phi, scene.psi, scene.sar_response)
    r_tilde = np.stack([lowpass_reflectivity(scene.r[t], scene.sar_response) for t in range(T)])
    if scene.d is not None:
        d_tilde = apply_sar_response(ComplexStack.from_planes(scene.d), scene.phi, scene.psi,
                                     scene.sar_response).planes()
    else:
        d_tilde = np.zeros((T, H, W), dtype=np.complex128)
    meta = dict(scene.meta)
    meta["gamma_bar"] = average_coherence(coherence_matrix(scene.coherence))
    return ComplexStack.from_planes(zt.planes(), meta), SceneTruth(r_tilde, d_tilde)


def voronoi_labels(shape, n_cells, rng):
    """Label map of a random Voronoi tessellation (circular distances)."""
    g = as_rng(rng).generator()
    h, w = shape
    seeds = g.uniform(0, 1, size=(n_cells, 2)) * np.array([h, w])
    y, x = np.mgrid[0:h, 0:w]
    dy = np.abs(y[..., None] - seeds[:, 0])
    dx = np.abs(x[..., None] - seeds[:, 1])
    dy = np.minimum(dy, h - dy)
    dx = np.minimum(dx, w - dx)
    return np.argmin(dy ** 2 + dx ** 2, axis=-1)


def piecewise_scene(shape, T, rng, n_classes=3, dynamic_db=10.0, change_fraction=0.2,
                    cell_size=6.0, ref_index=0, coherence=None,
                    sar_response=None, base_level=1.0):
    """Piecewise-constant reflectivity stack with temporal class changes.

    Class levels are log-spaced over ``dynamic_db``. Every date other than
    ``ref_index`` relabels whole cells covering about ``change_fraction`` of
    the area (relative to the reference date).
    """
    rng = as_rng(rng)
    h, w = shape
    n_cells = max(2, int(round(h * w / cell_size ** 2)))
    labels = voronoi_labels(shape, n_cells, rng.child(0))
    g = rng.child(1).generator()
    cell_class = g.integers(0, n_classes, size=n_cells)
    levels = base_level * 10 ** (np.linspace(0, dynamic_db, n_classes) / 10)
    area = np.bincount(labels.ravel(), minlength=n_cells)
    r = np.empty((T, h, w))
    for t in range(T):
        cls = cell_class.copy()
        if t != ref_index:
            gt = rng.child(2, t).generator()
            covered = 0
            for c in gt.permutation(n_cells):
                if covered >= change_fraction * h * w:
                    break
                cls[c] = (cls[c] + gt.integers(1, n_classes)) % n_classes
                covered += area[c]
        r[t] = levels[cls[labels]]
    if coherence is None:
        coherence = ExponentialCoherence.regular(T, 0.0)
    return SceneModel(r=r, coherence=coherence,
                      sar_response=sar_response or SarResponseSpec(),
                      meta={"ref_index": ref_index})


def smooth_phase_screen(shape, rng, corr_len=16.0, rms=1.0):
    """Gaussian random field with Gaussian spectrum, scaled to ``rms`` radians."""
    g = as_rng(rng).generator()
    h, w = shape
    white = g.standard_normal((h, w))
    fy = np.fft.fftfreq(h)[:, None]
    fx = np.fft.fftfreq(w)[None, :]
    filt = np.exp(-2 * (np.pi * corr_len) ** 2 * (fx ** 2 + fy ** 2))
    field_ = np.fft.ifft2(np.fft.fft2(white) * filt).real
    sd = field_.std()
    return field_ * (rms / sd) if sd > 0 else field_
