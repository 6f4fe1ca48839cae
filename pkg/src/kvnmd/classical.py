"""Classical molecular-dynamics reference: integrators, sampling, VACF, Green-Kubo.

Ensemble kernels come in two flavours, a numba loop per trajectory and a numpy
version vectorized over trajectories; ``KVNMD_BACKEND`` selects between them.
Both consume the same pre-generated Gaussian noise, so they agree to
round-off. Tabulated potentials always take the numpy path.

Integrator schemes (``scheme`` argument):

``"velocity"``      velocity Verlet (kick-drift-kick), the NVE default
``"position"``      position Verlet (drift-kick-drift), the classical map
                    that the KvN NVE step discretizes
``"nose_hoover"``   xi half-step, friction half-step, velocity Verlet,
                    friction half-step, xi half-step
``"nh_position"``   drift, kick, friction, xi, friction, kick, drift, the
                    ordering used by the KvN NVT step
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ._accel import njit, use_numba
from .potentials import KIND_CODE, PotentialModel
from .readout import CorrelationSeries

SCHEMES = {"velocity": 0, "position": 1, "nose_hoover": 2, "nh_position": 3}
TWO_PI = 2.0 * math.pi


@dataclass
class MdState:
    q: np.ndarray
    p: np.ndarray
    xi: float = 0.0
    t: float = 0.0

    def __post_init__(self):
        self.q = np.atleast_1d(np.asarray(self.q, dtype=float)).copy()
        self.p = np.atleast_1d(np.asarray(self.p, dtype=float)).copy()

    def wrapped_q(self) -> np.ndarray:
        return np.mod(self.q, TWO_PI)


@dataclass
class Ensemble:
    q: np.ndarray
    p: np.ndarray
    xi: np.ndarray | None
    rng_seed: int

    def __len__(self):
        return self.q.shape[0]

    def state(self, i: int) -> MdState:
        return MdState(self.q[i], self.p[i], 0.0 if self.xi is None else float(self.xi[i]))


@dataclass
class RunningIntegral:
    times: np.ndarray
    D_of_t: np.ndarray
    blocks: np.ndarray | None = None

    def window(self, t1: float, t2: float):
        """Mean and standard deviation of ``D(t)`` over ``t1 <= t <= t2``."""
        sel = (self.times >= t1 - 1e-9) & (self.times <= t2 + 1e-9)
        if not np.any(sel):
            raise ValueError(f"no samples in [{t1}, {t2}]")
        vals = self.D_of_t[sel]
        return float(vals.mean()), float(vals.std())

    def window_stderr(self, t1: float, t2: float) -> float:
        """Standard error of the window mean from independent trajectory blocks."""
        if self.blocks is None or len(self.blocks) < 2:
            return float("nan")
        sel = (self.times >= t1 - 1e-9) & (self.times <= t2 + 1e-9)
        means = self.blocks[:, sel].mean(axis=1)
        return float(means.std(ddof=1) / math.sqrt(len(means)))


@dataclass
class MdConfig:
    """Thermostat settings for the Nose-Hoover schemes."""

    T0: float = 1.0
    Q: float = 1.0
    N_f: int | None = None


def _cfg_values(model, cfg):
    T0 = getattr(cfg, "T0", 1.0)
    Q = getattr(cfg, "Q", 1.0)
    nf = getattr(cfg, "N_f", None)
    return float(T0), float(Q), float(model.n_particles if nf is None else nf)


# single-state steps --------------------------------------------------------

def _force(model, q):
    return np.array(model.forces(*q), dtype=float)


def energy(model: PotentialModel, s: MdState) -> float:
    m = np.asarray(model.masses)
    return float(model.energy(*s.q) + 0.5 * np.sum(s.p ** 2 / m))


def verlet_step(s: MdState, model: PotentialModel, dt: float) -> MdState:
    """Velocity Verlet."""
    m = np.asarray(model.masses)
    p = s.p + 0.5 * dt * _force(model, s.q)
    q = s.q + dt * p / m
    p = p + 0.5 * dt * _force(model, q)
    return MdState(q, p, s.xi, s.t + dt)


def position_verlet_step(s: MdState, model: PotentialModel, dt: float) -> MdState:
    m = np.asarray(model.masses)
    q = s.q + 0.5 * dt * s.p / m
    p = s.p + dt * _force(model, q)
    q = q + 0.5 * dt * p / m
    return MdState(q, p, s.xi, s.t + dt)


def nose_hoover_step(s: MdState, model: PotentialModel, cfg, dt: float) -> MdState:
    """Symmetric single-thermostat step around an inner velocity Verlet."""
    T0, Q, nf = _cfg_values(model, cfg)
    m = np.asarray(model.masses)
    h = 0.5 * dt
    xi = s.xi + h * (np.sum(s.p ** 2 / m) - nf * T0) / Q
    p = s.p * math.exp(-xi * h)
    inner = verlet_step(MdState(s.q, p, xi, s.t), model, dt)
    p = inner.p * math.exp(-xi * h)
    xi = xi + h * (np.sum(p ** 2 / m) - nf * T0) / Q
    return MdState(inner.q, p, xi, s.t + dt)


# numba kernels -------------------------------------------------------------

@njit(cache=True)
def _nb_force(kind, V0, eps, q, f):
    if kind == 0:
        f[0] = V0 * math.sin(q[0])
    else:
        s = math.sin(q[0] - q[1])
        f[0] = V0 * (s + eps * math.sin(q[0]))
        f[1] = V0 * (-s + eps * math.sin(q[1]))


@njit(cache=True)
def _nb_step(scheme, kind, V0, eps, m, T0, Q, nf, dt, q, p, xi, f):
    d = q.shape[0]
    h = 0.5 * dt
    # schemes 0 and 2 expect f = F(q) on entry and leave F(q_new) in f
    if scheme == 0:
        for i in range(d):
            p[i] += h * f[i]
            q[i] += dt * p[i] / m[i]
        _nb_force(kind, V0, eps, q, f)
        for i in range(d):
            p[i] += h * f[i]
    elif scheme == 1:
        for i in range(d):
            q[i] += h * p[i] / m[i]
        _nb_force(kind, V0, eps, q, f)
        for i in range(d):
            p[i] += dt * f[i]
            q[i] += h * p[i] / m[i]
    elif scheme == 2:
        g = -nf * T0
        for i in range(d):
            g += p[i] * p[i] / m[i]
        xi += h * g / Q
        s = math.exp(-xi * h)
        for i in range(d):
            p[i] *= s
            p[i] += h * f[i]
            q[i] += dt * p[i] / m[i]
        _nb_force(kind, V0, eps, q, f)
        g = -nf * T0
        for i in range(d):
            p[i] += h * f[i]
            p[i] *= s
            g += p[i] * p[i] / m[i]
        xi += h * g / Q
    else:
        for i in range(d):
            q[i] += h * p[i] / m[i]
        _nb_force(kind, V0, eps, q, f)
        s = math.exp(-xi * h)
        g = -nf * T0
        for i in range(d):
            p[i] += h * f[i]
            p[i] *= s
            g += p[i] * p[i] / m[i]
        xi += dt * g / Q
        s = math.exp(-xi * h)
        for i in range(d):
            p[i] *= s
            p[i] += h * f[i]
            q[i] += h * p[i] / m[i]
    return xi


@njit(cache=True)
def _nb_trajectory(scheme, kind, V0, eps, m, T0, Q, nf, dt, q0, p0, xi0, n_steps, stride, out_v):
    # out_v: (n_steps // stride + 1, d) velocities every `stride` steps
    d = q0.shape[0]
    q = q0.copy()
    p = p0.copy()
    xi = xi0
    f = np.empty(d)
    _nb_force(kind, V0, eps, q, f)
    for i in range(d):
        out_v[0, i] = p[i] / m[i]
    r = 1
    for s in range(1, n_steps + 1):
        xi = _nb_step(scheme, kind, V0, eps, m, T0, Q, nf, dt, q, p, xi, f)
        if s % stride == 0:
            for i in range(d):
                out_v[r, i] = p[i] / m[i]
            r += 1


@njit(cache=True)
def _nb_single_origin(scheme, kind, V0, eps, m, T0, Q, nf, dt, Q0, P0, XI0, n_steps, stride, acc):
    # acc: (n_rec, d) running sum of v(s) v(0) over trajectories, fixed order
    n, d = Q0.shape
    q = np.empty(d)
    p = np.empty(d)
    v0 = np.empty(d)
    f = np.empty(d)
    for k in range(n):
        for i in range(d):
            q[i] = Q0[k, i]
            p[i] = P0[k, i]
            v0[i] = p[i] / m[i]
            acc[0, i] += v0[i] * v0[i]
        xi = XI0[k]
        _nb_force(kind, V0, eps, q, f)
        r = 1
        for s in range(1, n_steps + 1):
            xi = _nb_step(scheme, kind, V0, eps, m, T0, Q, nf, dt, q, p, xi, f)
            if s % stride == 0:
                for i in range(d):
                    acc[r, i] += v0[i] * p[i] / m[i]
                r += 1


@njit(cache=True)
def _nb_baoab(kind, V0, eps, m, T, gamma, dt, q, p, noise, f):
    # q, p: (n_chains, d); noise: (n_steps, n_chains, d)
    c1 = math.exp(-gamma * dt)
    c2 = math.sqrt(1.0 - c1 * c1)
    n_steps, n, d = noise.shape
    h = 0.5 * dt
    for s in range(n_steps):
        for k in range(n):
            _nb_force(kind, V0, eps, q[k], f)
            for i in range(d):
                p[k, i] += h * f[i]
                q[k, i] += h * p[k, i] / m[i]
                p[k, i] = c1 * p[k, i] + c2 * math.sqrt(m[i] * T) * noise[s, k, i]
                q[k, i] += h * p[k, i] / m[i]
            _nb_force(kind, V0, eps, q[k], f)
            for i in range(d):
                p[k, i] += h * f[i]


# numpy counterparts (vectorized over trajectories) ------------------------------

def _np_forces(model, q):
    return np.stack(np.broadcast_arrays(*model.forces(*q.T)), axis=-1).astype(float)


def _np_step(scheme, model, m, T0, Q, nf, dt, q, p, xi):
    h = 0.5 * dt
    if scheme == 0:
        p += h * _np_forces(model, q)
        q += dt * p / m
        p += h * _np_forces(model, q)
    elif scheme == 1:
        q += h * p / m
        p += dt * _np_forces(model, q)
        q += h * p / m
    elif scheme == 2:
        xi += h * (np.sum(p * p / m, axis=1) - nf * T0) / Q
        s = np.exp(-xi * h)[:, None]
        p *= s
        p += h * _np_forces(model, q)
        q += dt * p / m
        p += h * _np_forces(model, q)
        p *= s
        xi += h * (np.sum(p * p / m, axis=1) - nf * T0) / Q
    else:
        q += h * p / m
        f = _np_forces(model, q)
        p += h * f
        p *= np.exp(-xi * h)[:, None]
        xi += dt * (np.sum(p * p / m, axis=1) - nf * T0) / Q
        p *= np.exp(-xi * h)[:, None]
        p += h * f
        q += h * p / m
    return xi


def _np_batch_velocities(scheme, model, m, T0, Q, nf, dt, Q0, P0, XI0, n_steps, stride):
    q, p, xi = Q0.copy(), P0.copy(), XI0.copy()
    out = np.empty((Q0.shape[0], n_steps // stride + 1, Q0.shape[1]))
    out[:, 0] = p / m
    r = 1
    for s in range(1, n_steps + 1):
        xi = _np_step(scheme, model, m, T0, Q, nf, dt, q, p, xi)
        if s % stride == 0:
            out[:, r] = p / m
            r += 1
    return out


def _np_baoab(model, m, T, gamma, dt, q, p, noise):
    c1 = math.exp(-gamma * dt)
    c2 = math.sqrt(1.0 - c1 * c1)
    h = 0.5 * dt
    sd = np.sqrt(m * T)
    for s in range(noise.shape[0]):
        p += h * _np_forces(model, q)
        q += h * p / m
        p[...] = c1 * p + c2 * sd * noise[s]
        q += h * p / m
        p += h * _np_forces(model, q)


def _params(model, cfg):
    T0, Q, nf = _cfg_values(model, cfg)
    code = KIND_CODE.get(model.kind, -1)
    return code, float(model.V0), float(model.eps), np.asarray(model.masses, dtype=float), T0, Q, nf


def _numba_ok(model):
    return use_numba() and model.analytic


# ensembles -----------------------------------------------------------------

def make_rng(seed: int, n_streams: int):
    """Independent Philox streams spawned from one 64-bit seed."""
    ss = np.random.SeedSequence(int(seed))
    return [np.random.Generator(np.random.Philox(child)) for child in ss.spawn(n_streams)]


def langevin_sample(model: PotentialModel, beta: float, n_samples: int, seed: int,
                    gamma: float = 1.0, dt: float = 0.01, burn_in: int = 10_000,
                    thin: int = 1_000, n_chains: int | None = None,
                    Q: float | None = None, block: int = 1_000) -> Ensemble:
    """Canonical samples from BAOAB Langevin chains run in lockstep.

    Each chain is burned in for ``burn_in`` steps and then emits one sample
    every ``thin`` steps. With ``Q`` given, an independent friction value is
    drawn for every sample from the Gaussian of variance ``T/Q``.
    """
    if not beta > 0:
        raise ValueError("beta must be positive")
    T = 1.0 / beta
    d = model.n_particles
    if n_chains is None:
        n_chains = min(n_samples, 256)
    n_chains = max(1, min(n_chains, n_samples))
    per_chain = -(-n_samples // n_chains)
    streams = make_rng(seed, n_chains + 1)
    m = np.asarray(model.masses, dtype=float)
    q = np.stack([g.uniform(0.0, TWO_PI, d) for g in streams[:n_chains]])
    p = np.stack([g.standard_normal(d) for g in streams[:n_chains]]) * np.sqrt(m * T)
    code, V0, eps, *_ = _params(model, None)
    f = np.empty(d)

    def advance(n):
        done = 0
        while done < n:
            b = min(block, n - done)
            noise = np.stack([g.standard_normal((b, d)) for g in streams[:n_chains]], axis=1)
            if _numba_ok(model):
                _nb_baoab(code, V0, eps, m, T, gamma, dt, q, p, noise, f)
            else:
                _np_baoab(model, m, T, gamma, dt, q, p, noise)
            done += b

    advance(burn_in)
    qs, ps = [], []
    for _ in range(per_chain):
        advance(thin)
        qs.append(q.copy())
        ps.append(p.copy())
    # sample order: draw r of chain c at index r*n_chains + c
    Qs = np.concatenate(qs)[:n_samples]
    Ps = np.concatenate(ps)[:n_samples]
    xi = None
    if Q is not None:
        xi = streams[-1].standard_normal(n_samples) * math.sqrt(T / Q)
    return Ensemble(np.mod(Qs, TWO_PI), Ps, xi, int(seed))


def _dofs(d, dof_index):
    if dof_index is None:
        return list(range(d))
    if isinstance(dof_index, int):
        dof_index = [dof_index]
    out = [int(i) for i in dof_index]
    if any(i < 0 or i >= d for i in out):
        raise ValueError(f"dof_index {dof_index} out of range for {d} dofs")
    return out


def _autocorr_fft(v: np.ndarray, max_lag: int) -> np.ndarray:
    """Multi-origin autocorrelation sums ``sum_t v(t) v(t+s)`` for ``s <= max_lag``, along axis 0."""
    n = v.shape[0]
    nfft = 1 << int(math.ceil(math.log2(2 * n)))
    fv = np.fft.rfft(v, n=nfft, axis=0)
    ac = np.fft.irfft(fv * np.conj(fv), n=nfft, axis=0)[: max_lag + 1]
    return ac


def vacf_md(ens: Ensemble, model: PotentialModel, cfg, dt: float, n_steps: int,
            dof_index=None, scheme: str | None = None, stride: int = 1,
            multi_origin: bool = False, run_steps: int | None = None,
            n_blocks: int = 10) -> CorrelationSeries:
    """Trajectory-averaged VACF sampled every ``stride`` steps up to ``n_steps``.

    ``dof_index`` picks the velocity component (``None`` averages all of them).
    The single-origin estimator correlates against ``t = 0`` of every
    trajectory. With ``multi_origin`` each trajectory is run for ``run_steps``
    steps and every sampled time is used as an origin. The returned series
    carries ``C0`` and per-block raw correlations in ``blocks``.
    """
    if scheme is None:
        ens_name = getattr(cfg, "ensemble", "NVE")
        scheme = "nose_hoover" if str(ens_name).upper() == "NVT" else "velocity"
    sc = SCHEMES[scheme]
    if sc >= 2 and ens.xi is None:
        XI0 = np.zeros(len(ens))
    else:
        XI0 = np.zeros(len(ens)) if ens.xi is None else np.asarray(ens.xi, dtype=float)
    if n_steps % stride:
        raise ValueError("n_steps must be a multiple of stride")
    code, V0, eps, m, T0, Q, nf = _params(model, cfg)
    d = model.n_particles
    dofs = _dofs(d, dof_index)
    n_rec = n_steps // stride + 1
    n = len(ens)
    nb = max(1, min(n_blocks, n))
    edges = np.linspace(0, n, nb + 1).astype(int)
    blocks = np.zeros((nb, n_rec))
    Q0 = np.ascontiguousarray(ens.q, dtype=float)
    P0 = np.ascontiguousarray(ens.p, dtype=float)
    if not multi_origin:
        for b in range(nb):
            lo, hi = edges[b], edges[b + 1]
            if _numba_ok(model):
                acc = np.zeros((n_rec, d))
                _nb_single_origin(sc, code, V0, eps, m, T0, Q, nf, dt, Q0[lo:hi], P0[lo:hi],
                                  XI0[lo:hi].copy(), n_steps, stride, acc)
            else:
                v = _np_batch_velocities(sc, model, m, T0, Q, nf, dt, Q0[lo:hi], P0[lo:hi],
                                         XI0[lo:hi].copy(), n_steps, stride)
                acc = np.einsum("kri,ki->ri", v, v[:, 0])
            blocks[b] = acc[:, dofs].sum(axis=1) / ((hi - lo) * len(dofs))
    else:
        run_steps = run_steps or 5 * n_steps
        if run_steps % stride or run_steps < n_steps:
            raise ValueError("run_steps must be a multiple of stride and >= n_steps")
        n_run = run_steps // stride + 1
        counts = (n_run - np.arange(n_rec)).astype(float)
        for b in range(nb):
            lo, hi = edges[b], edges[b + 1]
            acc = np.zeros(n_rec)
            for k in range(lo, hi):
                if _numba_ok(model):
                    v = np.empty((n_run, d))
                    _nb_trajectory(sc, code, V0, eps, m, T0, Q, nf, dt, Q0[k].copy(), P0[k].copy(),
                                   float(XI0[k]), run_steps, stride, v)
                else:
                    v = _np_batch_velocities(sc, model, m, T0, Q, nf, dt, Q0[k:k + 1], P0[k:k + 1],
                                             XI0[k:k + 1].copy(), run_steps, stride)[0]
                acc += _autocorr_fft(v[:, dofs], n_rec - 1).sum(axis=1) / counts
            blocks[b] = acc / ((hi - lo) * len(dofs))
    weights = np.diff(edges).astype(float)
    C = weights @ blocks / weights.sum()
    series = CorrelationSeries(dt * stride, C / C[0], float(C[0]))
    series.blocks = blocks
    return series


def gk_running(series: CorrelationSeries, C0: float | None = None) -> RunningIntegral:
    """Cumulative trapezoid ``D(t) = int_0^t C(t') dt'`` of the unnormalized VACF."""
    c = np.asarray(series.c, dtype=float)
    if c.size == 0:
        raise ValueError("empty correlation series")
    C0 = series.C0 if C0 is None else C0
    C = C0 * c
    dt = series.dt
    D = np.concatenate([[0.0], np.cumsum(0.5 * dt * (C[1:] + C[:-1]))])
    blocks = getattr(series, "blocks", None)
    bD = None
    if blocks is not None:
        bD = np.concatenate([np.zeros((blocks.shape[0], 1)),
                             np.cumsum(0.5 * dt * (blocks[:, 1:] + blocks[:, :-1]), axis=1)], axis=1)
    return RunningIntegral(series.t, D, bD)


def kinetic_temperature(p: np.ndarray, masses) -> float:
    """``sum_i <p_i^2/m_i> / N_f`` over an array of momenta ``(n, d)``."""
    p = np.atleast_2d(p)
    return float(np.mean(np.sum(p ** 2 / np.asarray(masses), axis=1)) / p.shape[1])


def run_trajectory(s: MdState, model: PotentialModel, cfg, dt: float, n_steps: int,
                   scheme: str = "velocity", record_every: int = 1):
    """Integrate one state; returns ``(final_state, times, q, p, xi)`` records."""
    sc = SCHEMES[scheme]
    code, V0, eps, m, T0, Q, nf = _params(model, cfg)
    q = s.q.copy()
    p = s.p.copy()
    xi = float(s.xi)
    n_rec = n_steps // record_every + 1
    rq, rp, rxi = np.empty((n_rec, q.size)), np.empty((n_rec, q.size)), np.empty(n_rec)
    rq[0], rp[0], rxi[0] = q, p, xi
    if _numba_ok(model):
        f = np.empty(q.size)
        _nb_force(code, V0, eps, q, f)
        step = lambda xi: _nb_step(sc, code, V0, eps, m, T0, Q, nf, dt, q, p, xi, f)
    else:
        qq, pp = q[None, :], p[None, :]
        step = lambda xi: float(_np_step(sc, model, m, T0, Q, nf, dt, qq, pp, np.array([xi]))[0])
    r = 1
    for k in range(1, n_steps + 1):
        xi = step(xi)
        if k % record_every == 0:
            rq[r], rp[r], rxi[r] = q, p, xi
            r += 1
    times = s.t + dt * record_every * np.arange(n_rec)
    return MdState(q, p, xi, s.t + n_steps * dt), times, rq, rp, rxi
