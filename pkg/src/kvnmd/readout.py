"""Green-Kubo readout from KvN correlation functions.

The flux-excited state ``alpha = J psi / ||J psi||`` has autocorrelation
``c_s = Re <alpha|U^s|alpha>`` under the one-step propagator ``U``; scaled by
``C0 = <psi|J^2|psi>`` this is the discrete flux autocorrelation.

Phase estimation with ``m`` ancillas (``K = 2**m``) applied to ``alpha``
lands in bin zero with probability

    P0 = (K + 2 sum_{s=1}^{K-1} (K - s) c_s) / K**2,

so ``D = C0 * tau * P0 / 2`` with ``tau = K dt`` is the Bartlett-windowed
Green-Kubo integral ``C0 dt [1/2 + sum_s (1 - s/K) c_s]``.

Ancilla convention for the explicit register simulation: ancilla ``j``
controls ``U**(2**j)`` and is bit ``j`` (the ``2**j`` digit) of the bin index.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .engine import Propagator
from .phase_space import GridFunction, KvnState

AMPLITUDE_BUDGET = 1 << 30


class ResourceGuardError(RuntimeError):
    """Requested simulation exceeds the configured amplitude budget."""


@dataclass
class CorrelationSeries:
    dt: float
    c: np.ndarray
    C0: float = 1.0
    complex_raw: np.ndarray | None = None

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=float)
        if self.c.ndim != 1 or self.c.size == 0:
            raise ValueError("correlation series must be a non-empty 1-d array")

    @property
    def t(self) -> np.ndarray:
        return self.dt * np.arange(self.c.size)

    def __len__(self):
        return self.c.size


@dataclass
class BartlettEstimate:
    m_anc: int
    K: int
    tau: float
    P0: float
    D: float
    clamped: bool = False


@dataclass
class RichardsonFit:
    m_values: list
    D_infinity: float
    a1: float
    stderr: float
    residuals: np.ndarray = field(default_factory=lambda: np.zeros(0))


def velocity_flux(grid, model, particle: int = 1) -> GridFunction:
    """``J = p_l / m_l`` for one particle."""
    return GridFunction(grid, grid.coord(f"p{particle}") / model.masses[particle - 1])


def flux_excite(eq_state: KvnState, flux, subtract_mean: bool = False):
    """Return ``(J psi / ||J psi||, C0)`` with ``C0 = <psi|J^2|psi>``."""
    vals = flux.values if isinstance(flux, GridFunction) else np.asarray(flux, dtype=float)
    rho = np.abs(eq_state.amp) ** 2
    if subtract_mean:
        vals = vals - np.sum(rho * vals) / np.sum(rho)
    excited = eq_state.amp * vals
    nrm2 = float(np.sum(np.abs(excited) ** 2))
    if nrm2 == 0.0:
        raise ValueError("flux annihilates the equilibrium state")
    return KvnState(eq_state.grid, excited / math.sqrt(nrm2)), nrm2


def vacf_kvn(alpha: KvnState, model, cfg, n_steps: int, C0: float = 1.0,
             propagator: Propagator | None = None) -> CorrelationSeries:
    """Normalized KvN correlation ``c_s = Re <alpha|U^s|alpha>``, ``s = 0..n_steps``."""
    if n_steps < 1:
        raise ValueError("n_steps must be >= 1")
    prop = propagator or Propagator(alpha.grid, model, cfg)
    raw = prop.correlation(alpha, n_steps)
    raw = raw / raw[0].real
    c = raw.real.copy()
    c[0] = 1.0
    return CorrelationSeries(cfg.dt, c, C0, raw)


def p0_bartlett(series, m_anc: int, return_flag: bool = False):
    """Bin-zero probability from the first ``K = 2**m_anc`` correlation values."""
    c = series.c if isinstance(series, CorrelationSeries) else np.asarray(series, dtype=float)
    K = 1 << int(m_anc)
    if c.size < K:
        raise ValueError(f"series has {c.size} points, need K = {K}")
    s = np.arange(1, K)
    P0 = (K + 2.0 * np.dot(K - s, c[1:K])) / float(K) ** 2
    clamped = P0 < -1e-9 or P0 > 1 + 1e-9
    if clamped:
        warnings.warn(f"P0 = {P0} outside [0, 1]; clamping", RuntimeWarning)
    P0 = min(max(P0, 0.0), 1.0)
    return (P0, clamped) if return_flag else P0


def d_from_p0(C0: float, tau: float, P0: float) -> float:
    return 0.5 * C0 * tau * P0


def d_bartlett(series: CorrelationSeries, m_anc: int) -> BartlettEstimate:
    P0, clamped = p0_bartlett(series, m_anc, return_flag=True)
    K = 1 << int(m_anc)
    tau = K * series.dt
    return BartlettEstimate(int(m_anc), K, tau, P0, d_from_p0(series.C0, tau, P0), clamped)


def continuous_bartlett(t: np.ndarray, C: np.ndarray, tau: float) -> float:
    """Trapezoid value of ``int_0^tau (1 - t/tau) C(t) dt`` on the samples ``t <= tau``."""
    t = np.asarray(t, dtype=float)
    C = np.asarray(C, dtype=float)
    sel = t <= tau + 1e-12
    return float(np.trapezoid((1.0 - t[sel] / tau) * C[sel], t[sel]))


def richardson(points) -> RichardsonFit:
    """Least-squares ``D(K) = D_inf + a1/K`` over ``[(m, D), ...]`` with ``K = 2**m``."""
    pts = sorted((int(m), float(d)) for m, d in points)
    ms = [m for m, _ in pts]
    if len(set(ms)) < 2:
        raise ValueError("Richardson fit needs at least two distinct ancilla counts")
    x = np.array([2.0 ** -m for m in ms])
    y = np.array([d for _, d in pts])
    A = np.column_stack([np.ones_like(x), x])
    coef, _, rank, _ = np.linalg.lstsq(A, y, rcond=None)
    if rank < 2:
        raise ValueError("rank-deficient Richardson fit")
    resid = y - A @ coef
    dof = len(y) - 2
    if dof > 0:
        s2 = float(resid @ resid) / dof
        stderr = math.sqrt(s2 * np.linalg.inv(A.T @ A)[0, 0])
    else:
        stderr = float("nan")
    return RichardsonFit(ms, float(coef[0]), float(coef[1]), stderr, resid)


def shot_noise_sigma(C0: float, tau: float, P0: float, n_shots: int) -> float:
    """Standard deviation of ``D_hat`` from ``n_shots`` Bernoulli draws of bin zero."""
    return 0.5 * C0 * tau * math.sqrt(P0 * (1.0 - P0) / n_shots)


def qubits_for_target(A: float, gamma: float, eps: float) -> int:
    """Smallest ``n`` with ``A * 2**(-gamma*n) <= eps``."""
    if A <= 0 or gamma <= 0 or eps <= 0:
        raise ValueError("A, gamma and eps must be positive")
    x = math.log2(A / eps) / gamma
    return max(0, math.ceil(x - 1e-12))


def dbart_error_bound(C0: float, tau: float, eps_c: float) -> float:
    if min(C0, tau, eps_c) < 0:
        raise ValueError("inputs must be non-negative")
    return 0.5 * C0 * tau * eps_c


# grid-convergence analysis -------------------------------------------------

def align_series(a: CorrelationSeries, b: CorrelationSeries):
    """Return both series on the coarser common time step."""
    coarse, fine = (a, b) if a.dt >= b.dt else (b, a)
    ratio = coarse.dt / fine.dt
    r = int(round(ratio))
    if abs(ratio - r) > 1e-9 * ratio:
        raise ValueError(f"time steps {a.dt} and {b.dt} are not commensurate")
    fc = fine.c[::r]
    n = min(coarse.c.size, fc.size)
    ca, cb = (coarse.c[:n], fc[:n]) if a is coarse else (fc[:n], coarse.c[:n])
    return coarse.dt, ca, cb


def peak_deviation(kvn: CorrelationSeries, md: CorrelationSeries, t_max: float) -> float:
    """``max_{0<=t<=t_max} |c_kvn(t) - c_md(t)|`` on normalized series."""
    dt, ck, cm = align_series(kvn, md)
    n = int(math.floor(t_max / dt + 1e-9)) + 1
    if ck.size < n:
        raise ValueError(f"series cover t <= {(ck.size - 1) * dt}, need {t_max}")
    return float(np.max(np.abs(ck[:n] - cm[:n])))


def fit_power_law(N, dev):
    """Exponent ``gamma`` of ``dev ~ A N**(-gamma)``; ``nan`` when undefined."""
    N = np.asarray(N, dtype=float)
    dev = np.asarray(dev, dtype=float)
    if N.size < 2 or np.any(dev <= 0):
        return float("nan")
    slope = np.polyfit(np.log(N), np.log(dev), 1)[0]
    return float(-slope)


def grid_error_scan(series_by_n: dict, md_ref: CorrelationSeries, t_max: float):
    """Peak deviations per grid size and the fitted decay exponent."""
    if len(series_by_n) < 3:
        raise ValueError("grid scan needs at least three grid sizes")
    ns = sorted(series_by_n)
    devs = [peak_deviation(series_by_n[n], md_ref, t_max) for n in ns]
    return dict(zip(ns, devs)), fit_power_law(ns, devs)


# explicit phase-estimation register -------------------------------------------

def _hadamard(reg: np.ndarray, j: int, m: int) -> np.ndarray:
    # reg has shape (K, ...); bit j of the leading index
    K = reg.shape[0]
    v = reg.reshape((K >> (j + 1), 2, 1 << j) + reg.shape[1:])
    a, b = v[:, 0].copy(), v[:, 1].copy()
    r = 1.0 / math.sqrt(2.0)
    v[:, 0] = (a + b) * r
    v[:, 1] = (a - b) * r
    return reg


def _cphase(reg: np.ndarray, j: int, k: int, phi: float) -> np.ndarray:
    K = reg.shape[0]
    idx = np.arange(K)
    sel = ((idx >> j) & 1).astype(bool) & ((idx >> k) & 1).astype(bool)
    reg[sel] *= np.exp(1j * phi)
    return reg


def _swap(reg: np.ndarray, j: int, k: int) -> np.ndarray:
    K = reg.shape[0]
    idx = np.arange(K)
    bj, bk = (idx >> j) & 1, (idx >> k) & 1
    perm = idx ^ ((bj ^ bk) << j) ^ ((bj ^ bk) << k)
    reg[:] = reg[perm]
    return reg


def inverse_qft(reg: np.ndarray, m: int) -> np.ndarray:
    """Gate-level inverse QFT on the leading ``2**m`` index (bit j = digit 2**j).

    Maps ``|x>`` to ``K**-0.5 sum_b exp(-2 pi i x b / K) |b>``.
    """
    for j in range(m // 2):
        _swap(reg, j, m - 1 - j)
    for j in range(m):
        for k in range(j):
            _cphase(reg, j, k, -math.pi / (1 << (j - k)))
        _hadamard(reg, j, m)
    return reg


def qpe_statevector(alpha, propagator: Propagator, m_anc: int,
                    budget: int = AMPLITUDE_BUDGET) -> np.ndarray:
    """All ``2**m_anc`` ancilla-bin probabilities of phase estimation on ``alpha``."""
    amp = alpha.amp if isinstance(alpha, KvnState) else np.asarray(alpha)
    K = 1 << int(m_anc)
    if K * amp.size > budget:
        raise ResourceGuardError(f"QPE register needs {K * amp.size} amplitudes, budget is {budget}")
    reg = np.zeros((K,) + amp.shape, dtype=np.complex128)
    reg[0] = amp
    for j in range(m_anc):
        _hadamard(reg, j, m_anc)
    for j in range(m_anc):
        v = reg.reshape((K >> (j + 1), 2, 1 << j) + amp.shape)
        v[:, 1] = propagator.evolve(v[:, 1], 1 << j)
    inverse_qft(reg, m_anc)
    return np.sum(np.abs(reg.reshape(K, -1)) ** 2, axis=1)


def dense_step_matrix(propagator: Propagator, max_dim: int = 4096) -> np.ndarray:
    """Dense one-step unitary ``U`` built column by column from the fast step."""
    dim = propagator.grid.total_dim
    if dim > max_dim:
        raise ValueError(f"dense step limited to {max_dim} states, grid has {dim}")
    cols = propagator.step(np.eye(dim, dtype=np.complex128).reshape((dim,) + propagator.grid.shape))
    return cols.reshape(dim, dim).T


def eigenphase_decomposition(U: np.ndarray, alpha: np.ndarray):
    """Eigenphases ``phi_n`` of unitary ``U`` and weights ``|<n|alpha>|^2``."""
    T, Z = scipy.linalg.schur(U, output="complex")
    phases = np.angle(np.diag(T))
    w = np.abs(Z.conj().T @ np.ravel(alpha)) ** 2
    return phases, w


def fejer_bins(phases: np.ndarray, weights: np.ndarray, m_anc: int) -> np.ndarray:
    """Bin probabilities ``sum_n w_n |K^-1 sum_x exp(i x (phi_n - 2 pi b/K))|^2``."""
    K = 1 << int(m_anc)
    x = np.arange(K)
    b = np.arange(K)
    ph = np.exp(1j * np.outer(phases, x))                     # (n, x)
    ft = np.exp(-2j * np.pi * np.outer(x, b) / K) / K         # (x, b)
    amps = ph @ ft
    return weights @ (np.abs(amps) ** 2)
