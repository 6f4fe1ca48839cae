"""Amplitude-amplification statistics for the bin-zero readout.

With ``P0 = sin(theta)**2`` the Grover-amplified circuit with power ``k``
succeeds with probability ``p_k = sin((2k + 1) theta)**2``. This module
provides the fixed-``k`` inversion, maximum-likelihood estimation over a
growing schedule of powers, query accounting, a Monte Carlo RMSE harness and
a small explicit Grover-iterate oracle for cross-checks.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .classical import make_rng
from .readout import (AMPLITUDE_BUDGET, ResourceGuardError, _cphase, _hadamard, _swap,
                      inverse_qft)

HALF_PI = 0.5 * math.pi
_GOLD = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass
class Schedule:
    k_values: list
    shots_per_k: list

    def __post_init__(self):
        if len(self.k_values) != len(self.shots_per_k):
            raise ValueError("k_values and shots_per_k differ in length")

    @property
    def n_queries(self) -> int:
        return n_queries(self.k_values, self.shots_per_k)

    def prefix(self, L: int) -> "Schedule":
        return Schedule(self.k_values[:L], self.shots_per_k[:L])


@dataclass
class EstimationReport:
    theta_hat: float
    P0_hat: float
    D_hat: float
    N_queries: int
    rmse: float = float("nan")
    per_seed: np.ndarray = field(default_factory=lambda: np.zeros(0))
    label: str = ""


def p_k(theta, k):
    """``sin((2k+1) theta)**2``."""
    if np.any(np.asarray(k) < 0):
        raise ValueError("k must be non-negative")
    return np.sin((2 * np.asarray(k) + 1) * np.asarray(theta)) ** 2


def theta_from_p0(P0: float) -> float:
    return math.asin(math.sqrt(P0))


def fisher_information(theta, k):
    """Per-shot Fisher information of the Bernoulli model, ``4 (2k+1)**2``."""
    return 4.0 * (2 * np.asarray(k) + 1) ** 2 * np.ones_like(np.asarray(theta, dtype=float))


def fixed_k_estimate(h: int, N: int, k: int, theta_max: float | None = None) -> float:
    """Unfolded inversion ``arcsin(sqrt(h/N)) / (2k+1)``.

    ``theta_max`` is an optional prior bound; a warning is issued when the
    amplified angle could leave ``[0, pi/2]`` and the inversion is ambiguous.
    """
    if N <= 0 or not 0 <= h <= N:
        raise ValueError(f"need 0 <= h <= N and N > 0, got h={h}, N={N}")
    M = 2 * k + 1
    if k > 0 and (h == N or (theta_max is not None and M * theta_max > HALF_PI)):
        warnings.warn("amplified angle may exceed pi/2; fixed-k inversion is ambiguous", RuntimeWarning)
    return math.asin(math.sqrt(h / N)) / M


def fixed_k_sigma(k: int, N: int) -> float:
    """Predicted standard deviation of the fixed-k angle estimate."""
    return 1.0 / (2.0 * (2 * k + 1) * math.sqrt(N))


def n_queries(k_values: Sequence[int], shots: Sequence[int]) -> int:
    return int(sum(int(n) * (2 * int(k) + 1) for k, n in zip(k_values, shots)))


def eis_schedule(L: int, shots: int = 30) -> Schedule:
    """Growing schedule ``k = 0, 1, 2, 4, 8, ...`` with ``shots`` per power."""
    if L < 1:
        raise ValueError("L must be >= 1")
    ks = [0] + [1 << (i - 1) for i in range(1, L)]
    return Schedule(ks, [int(shots)] * L)


# maximum likelihood ------------------------------------------------------------

def _grid_size(k_max: int, grid_points: int) -> int:
    # at least ~40 points per likelihood fringe of the largest magnification
    return max(int(grid_points), 40 * (2 * int(k_max) + 1) + 1)


def _theta_grid(n: int) -> np.ndarray:
    return (np.arange(n) + 0.5) * (HALF_PI / n)


def _loglik(theta, ks, Ns, hs):
    out = 0.0
    for k, N, h in zip(ks, Ns, hs):
        p = math.sin((2 * k + 1) * theta) ** 2
        p = min(max(p, 1e-300), 1.0 - 1e-16)
        out += h * math.log(p) + (N - h) * math.log1p(-p)
    return out


def _golden(f, a, b, tol=1e-13, max_iter=200):
    c = b - _GOLD * (b - a)
    d = a + _GOLD * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(max_iter):
        if b - a < tol:
            break
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - _GOLD * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + _GOLD * (b - a)
            fd = f(d)
    return 0.5 * (a + b)


class _LikelihoodTable:
    """Tabulated ``log p_k`` and ``log(1-p_k)`` on a shared theta grid."""

    def __init__(self, ks, grid_points=100_000):
        self.ks = [int(k) for k in ks]
        self.theta = _theta_grid(_grid_size(max(self.ks), grid_points))
        p = np.sin(np.outer(2 * np.array(self.ks) + 1, self.theta)) ** 2
        p = np.clip(p, 1e-300, 1.0 - 1e-16)
        self.l1 = np.log(p)
        self.l0 = np.log1p(-p)

    def argmax(self, H: np.ndarray, Nmat: np.ndarray, rows) -> np.ndarray:
        ll = H @ self.l1[rows] + (Nmat - H) @ self.l0[rows]
        return np.argmax(ll, axis=1)


def _refine(i, theta, ks, Ns, hs):
    d = theta[1] - theta[0]
    lo = max(theta[i] - d, 0.0)
    hi = min(theta[i] + d, HALF_PI)
    return _golden(lambda t: _loglik(t, ks, Ns, hs), lo, hi)


def mlae_estimate(records, grid_points: int = 100_000, return_flag: bool = False):
    """Maximum-likelihood angle from ``[(k, N, h), ...]``.

    Dense grid scan over ``(0, pi/2)`` (densified automatically for large
    ``k``) followed by golden-section refinement around the best grid point;
    ties go to the smallest angle. All-zero or all-success records return
    the corresponding boundary with ``flag = True``.
    """
    # sorted so the floating-point likelihood does not depend on record order
    recs = sorted((int(k), int(N), int(h)) for k, N, h in records if int(N) > 0)
    if not recs:
        raise ValueError("need at least one record with N > 0")
    ks, Ns, hs = zip(*recs)
    if all(h == 0 for h in hs):
        return (0.0, True) if return_flag else 0.0
    if all(h == N for h, N in zip(hs, Ns)) and all(k == 0 for k in ks):
        return (HALF_PI, True) if return_flag else HALF_PI
    table = _LikelihoodTable(sorted(set(ks)), grid_points)
    rows = [table.ks.index(k) for k in ks]
    H = np.array([hs], dtype=float)
    Nm = np.array([Ns], dtype=float)
    i = int(table.argmax(H, Nm, rows)[0])
    th = _refine(i, table.theta, ks, Ns, hs)
    flag = all(h == N for h, N in zip(hs, Ns))
    return (th, flag) if return_flag else th


# Monte Carlo harness ---------------------------------------------------------

def _loglog_slope(x, y) -> float:
    return float(np.polyfit(np.log(np.asarray(x, float)), np.log(np.asarray(y, float)), 1)[0])


def simulate_counts(theta: float, schedule: Schedule, n_seeds: int, seed: int) -> np.ndarray:
    """Binomial good-outcome counts, shape ``(n_seeds, len(schedule))``, one stream per seed."""
    streams = make_rng(seed, n_seeds)
    probs = [float(p_k(theta, k)) for k in schedule.k_values]
    return np.array([[g.binomial(n, pr) for n, pr in zip(schedule.shots_per_k, probs)]
                     for g in streams], dtype=np.int64)


def mlae_harness(theta_true: float, schedule: Schedule, n_seeds: int, C0: float, tau: float,
                 D_ref: float | None = None, seed: int = 0, stages: Sequence[int] | None = None,
                 grid_points: int = 100_000) -> list:
    """RMSE of ``D_hat`` for every prefix (stage) of a growing schedule.

    Outcomes of stage ``L`` reuse the records of the earlier stages, as in a
    nested schedule. ``D_ref`` defaults to ``C0 tau sin(theta)**2 / 2``.
    """
    if n_seeds < 2:
        raise ValueError("n_seeds must be >= 2")
    scale = 0.5 * C0 * tau
    if D_ref is None:
        D_ref = scale * math.sin(theta_true) ** 2
    counts = simulate_counts(theta_true, schedule, n_seeds, seed)
    table = _LikelihoodTable(sorted(set(schedule.k_values)), grid_points)
    stages = stages or range(1, len(schedule.k_values) + 1)
    reports = []
    for L in stages:
        ks = schedule.k_values[:L]
        Ns = schedule.shots_per_k[:L]
        rows = [table.ks.index(k) for k in ks]
        H = counts[:, :L].astype(float)
        Nm = np.broadcast_to(np.array(Ns, dtype=float), H.shape)
        idx = table.argmax(H, Nm, rows)
        th = np.empty(n_seeds)
        for s in range(n_seeds):
            hs = counts[s, :L]
            if not hs.any():
                th[s] = 0.0
            else:
                th[s] = _refine(int(idx[s]), table.theta, ks, Ns, hs)
        D = scale * np.sin(th) ** 2
        rmse = float(np.sqrt(np.mean((D - D_ref) ** 2)))
        reports.append(EstimationReport(float(np.mean(th)), float(np.mean(np.sin(th) ** 2)),
                                        float(np.mean(D)), n_queries(ks, Ns), rmse, D, f"L={L}"))
    return reports


def naive_harness(theta_true: float, shot_counts: Sequence[int], n_seeds: int, C0: float,
                  tau: float, D_ref: float | None = None, seed: int = 0) -> list:
    """Direct bin-zero sampling (``k = 0``) at several shot budgets."""
    return fixed_k_harness(theta_true, 0, shot_counts, n_seeds, C0, tau, D_ref, seed)


def fixed_k_harness(theta_true: float, k: int, shot_counts: Sequence[int], n_seeds: int,
                    C0: float, tau: float, D_ref: float | None = None, seed: int = 0) -> list:
    scale = 0.5 * C0 * tau
    if D_ref is None:
        D_ref = scale * math.sin(theta_true) ** 2
    pk = float(p_k(theta_true, k))
    reports = []
    for j, N in enumerate(shot_counts):
        streams = make_rng(seed + 7919 * (j + 1), n_seeds)
        h = np.array([g.binomial(int(N), pk) for g in streams])
        th = np.arcsin(np.sqrt(h / N)) / (2 * k + 1)
        D = scale * np.sin(th) ** 2
        rmse = float(np.sqrt(np.mean((D - D_ref) ** 2)))
        reports.append(EstimationReport(float(th.mean()), float(np.mean(np.sin(th) ** 2)),
                                        float(D.mean()), int(N) * (2 * k + 1), rmse, D, f"k={k},N={N}"))
    return reports


def rmse_harness(theta_true: float, schedules: Sequence[Schedule], n_seeds: int, C0: float = 1.0,
                 tau: float = 1.0, D_ref: float | None = None, seed: int = 0) -> list:
    """One :class:`EstimationReport` per schedule (each evaluated independently)."""
    out = []
    for i, sch in enumerate(schedules):
        rep = mlae_harness(theta_true, sch, n_seeds, C0, tau, D_ref, seed + i,
                           stages=[len(sch.k_values)])[0]
        out.append(rep)
    return out


def rmse_slope(reports: Sequence[EstimationReport]) -> float:
    return _loglog_slope([r.N_queries for r in reports], [r.rmse for r in reports])


# explicit Grover iterate -------------------------------------------------------

def grover_probability(apply_a: Callable, apply_a_dag: Callable, good: np.ndarray, k: int,
                       shape: tuple) -> float:
    """Good-subspace probability of ``Q**k A |0>`` with ``Q = -A S0 A^dag S_chi``."""
    zero = np.zeros(shape, dtype=np.complex128)
    zero.flat[0] = 1.0
    psi = apply_a(zero)
    for _ in range(k):
        psi = np.where(good, -psi, psi)
        psi = apply_a_dag(psi)
        psi.flat[0] *= -1.0
        psi = apply_a(psi)
        psi = -psi
    return float(np.sum(np.abs(psi[good]) ** 2))


def _householder_to(alpha: np.ndarray):
    """Reflection ``W`` (as a callable) with ``W |0> = alpha``; ``W`` is its own inverse."""
    a = np.ravel(alpha).astype(np.complex128)
    a = a / np.linalg.norm(a)
    phase = a[0] / abs(a[0]) if abs(a[0]) > 0 else 1.0
    a_adj = a / phase   # a_adj[0] real and >= 0
    w = -a_adj.copy()
    w[0] += 1.0
    nw = np.linalg.norm(w)

    def reflect(v, forward):
        flat = v.reshape(v.shape[0], -1) if v.ndim > 1 else v[None]
        if forward:
            out = flat.copy()
            if nw > 1e-15:
                u = w / nw
                out -= 2.0 * np.outer(out @ u.conj(), u)
            return (out * phase).reshape(v.shape)
        out = flat / phase
        if nw > 1e-15:
            u = w / nw
            out = out - 2.0 * np.outer(out @ u.conj(), u)
        return out.reshape(v.shape)

    return reflect


def _qft(reg: np.ndarray, m: int) -> np.ndarray:
    for j in reversed(range(m)):
        _hadamard(reg, j, m)
        for k in reversed(range(j)):
            _cphase(reg, j, k, math.pi / (1 << (j - k)))
    for j in range(m // 2):
        _swap(reg, j, m - 1 - j)
    return reg


def qpe_oracle(alpha: np.ndarray, propagator, m_anc: int, budget: int = AMPLITUDE_BUDGET):
    """``(A, A_dag, good_mask, shape)`` for the bin-zero phase-estimation circuit.

    ``A`` prepares ``alpha`` on the system register from ``|0>`` with a
    Householder reflection and runs the phase-estimation circuit; the good
    subspace is ancilla bin zero.
    """
    amp = np.asarray(alpha.amp if hasattr(alpha, "amp") else alpha)
    K = 1 << int(m_anc)
    shape = (K,) + amp.shape
    if K * amp.size > budget:
        raise ResourceGuardError(f"Grover register needs {K * amp.size} amplitudes, budget is {budget}")
    prep = _householder_to(amp)
    dt = propagator.cfg.dt

    def apply_a(reg):
        reg = prep(reg, True).reshape(shape)
        for j in range(m_anc):
            _hadamard(reg, j, m_anc)
        for j in range(m_anc):
            v = reg.reshape((K >> (j + 1), 2, 1 << j) + amp.shape)
            v[:, 1] = propagator.evolve(v[:, 1], 1 << j, dt=dt)
        return inverse_qft(reg, m_anc)

    def apply_a_dag(reg):
        reg = _qft(reg.copy(), m_anc)
        for j in reversed(range(m_anc)):
            v = reg.reshape((K >> (j + 1), 2, 1 << j) + amp.shape)
            v[:, 1] = propagator.evolve(v[:, 1], 1 << j, dt=-dt)
        for j in reversed(range(m_anc)):
            _hadamard(reg, j, m_anc)
        return prep(reg, False).reshape(shape)

    good = np.zeros(shape, dtype=bool)
    good[0] = True
    return apply_a, apply_a_dag, good, shape


def grover_statevector(alpha, propagator, m_anc: int, k: int) -> float:
    """Amplified bin-zero probability by explicit operator algebra."""
    a, ad, good, shape = qpe_oracle(alpha, propagator, m_anc)
    return grover_probability(a, ad, good, k, shape)
