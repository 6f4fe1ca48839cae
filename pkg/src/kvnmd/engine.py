"""KvN generators and one-step split-operator propagators.

The four generator blocks act on a grid field as

* ``H1 = sum_i (p_i/m_i) lambda_{q_i}``        (drift, diagonal in (k_q, p))
* ``H2 = sum_i F_i(q) lambda_{p_i}``           (kick, diagonal in (q, k_p))
* ``H3 = -xi sum_i D_{p_i}``                   (Nose-Hoover friction)
* ``H4 = (sum_i p_i^2/m_i - N_f T0) lambda_xi / Q``  (thermostat advection)

where ``lambda = F^dag diag(k) F`` is spectral differentiation (``-i d/dz``)
with the unitary forward DFT ``F`` and ``D_p`` is the cyclic centered-difference
symmetrization of ``(p lambda_p + lambda_p p)/2``. With these signs the
drift moves a packet by ``+p dt/m``, the kick by ``+F dt`` and the friction
block rescales momenta by ``exp(-xi dt)``.

Propagators ``U_j(dt) = exp(-i dt H_j)`` are applied exactly: the diagonal
blocks as phases in the appropriate Fourier frame, the dilation block via one
eigendecomposition of ``D_p`` whose eigenphases are scaled per xi grid value.

Non-periodic axes (p, xi) are still differentiated cyclically, so density
reaching a window edge wraps around; keep windows at least ~6 sigma wide.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fft import dft_matrix, fft_axes
from .phase_space import AxisSpec, KvnState, PhaseGrid, wavenumbers

ENSEMBLES = ("NVE", "NVT")

# frame each op needs for the q, p and xi axis groups (True = Fourier)
_REQUIRES = {
    "drift": {"q": True, "p": False},
    "kick": {"q": False, "p": True},
    "dilation": {"p": False, "xi": False},
    "thermo": {"p": False, "xi": True},
}


@dataclass(frozen=True)
class StepConfig:
    dt: float = 0.02
    ensemble: str = "NVE"
    T0: float = 1.0
    Q: float = 1.0
    N_f: int | None = None

    def __post_init__(self):
        ens = str(self.ensemble).upper()
        if ens not in ENSEMBLES:
            raise ValueError(f"ensemble must be NVE or NVT, got {self.ensemble!r}")
        object.__setattr__(self, "ensemble", ens)
        if not self.T0 > 0:
            raise ValueError("T0 must be positive")
        if ens == "NVT" and not self.Q > 0:
            raise ValueError("Q must be positive for NVT")

    def n_f(self, n_particles: int) -> int:
        return n_particles if self.N_f is None else int(self.N_f)


def dilation_matrix(axis: AxisSpec) -> np.ndarray:
    """Cyclic centered-difference ``(p lambda_p + lambda_p p)/2`` on one p axis.

    ``D = i sum_j gamma_j (|j+1><j| - |j><j+1|)`` with
    ``gamma_j = (p_j + p_{j+1})/(4 dp)`` and ``j+1`` taken mod ``N``.
    """
    p = axis.values()
    n = axis.N
    gamma = (p + np.roll(p, -1)) / (4.0 * axis.delta)
    D = np.zeros((n, n), dtype=np.complex128)
    for j in range(n):
        k = (j + 1) % n
        D[k, j] += 1j * gamma[j]
        D[j, k] -= 1j * gamma[j]
    return D


class DilationBlock:
    """Spectral factorization ``D = V diag(lam) V^dag`` of one p axis."""

    def __init__(self, axis: AxisSpec):
        self.axis = axis
        p = axis.values()
        self.gamma = (p + np.roll(p, -1)) / (4.0 * axis.delta)
        self.matrix = dilation_matrix(axis)
        self.eigvals, self.eigvecs = np.linalg.eigh(self.matrix)
        self.eigvecs_h = np.ascontiguousarray(self.eigvecs.conj().T)


def _apply_along(mat: np.ndarray, a: np.ndarray, axis: int) -> np.ndarray:
    out = np.tensordot(mat, a, axes=([1], [axis]))
    return np.ascontiguousarray(np.moveaxis(out, 0, axis))


class Propagator:
    """Split-operator propagator for one grid, model and step configuration.

    Methods accept either a :class:`KvnState` or a bare amplitude array whose
    trailing dimensions are the grid shape (leading batch axes are allowed).
    """

    combine_limit = 1 << 22

    def __init__(self, grid: PhaseGrid, model, cfg: StepConfig):
        if model.n_particles != grid.n_particles:
            raise ValueError("model and grid disagree on the number of particles")
        if (cfg.ensemble == "NVT") != grid.has_xi:
            raise ValueError(f"{cfg.ensemble} step needs a grid {'with' if cfg.ensemble == 'NVT' else 'without'} a xi axis")
        self.grid = grid
        self.model = model
        self.cfg = cfg
        self.N_f = cfg.n_f(grid.n_particles)
        nd = grid.ndim
        self.axes = {
            "q": [i - nd for i in grid.q_indices()],
            "p": [i - nd for i in grid.p_indices()],
            "xi": [grid.index("xi") - nd] if grid.has_xi else [],
        }
        self.blocks = {}
        if grid.has_xi:
            for i in range(1, grid.n_particles + 1):
                self.blocks[f"p{i}"] = DilationBlock(grid.axis(f"p{i}"))
        self._cache = {}

    # phase factors ---------------------------------------------------
    def _combine(self, factors):
        size = int(np.prod(np.broadcast_shapes(*[f.shape for f in factors]), dtype=np.int64))
        if len(factors) > 1 and size <= self.combine_limit:
            out = factors[0]
            for f in factors[1:]:
                out = out * f
            return [np.ascontiguousarray(out)]
        return factors

    def _factors(self, name, dt):
        key = (name, float(dt))
        hit = self._cache.get(key)
        if hit is not None:
            return hit
        g = self.grid
        n = g.n_particles
        m = self.model.masses
        if name == "drift":
            fs = [np.exp(-1j * dt * g.coord(f"p{i}") * g.kvec(f"q{i}") / m[i - 1])
                  for i in range(1, n + 1)]
        elif name == "kick":
            qs = [g.coord(f"q{i}") for i in range(1, n + 1)]
            forces = self.model.forces(*qs)
            fs = [np.exp(-1j * dt * np.asarray(forces[i - 1]) * g.kvec(f"p{i}"))
                  for i in range(1, n + 1)]
        elif name == "thermo":
            ke = 0.0
            for i in range(1, n + 1):
                ke = ke + g.coord(f"p{i}") ** 2 / m[i - 1]
            coef = (ke - self.N_f * self.cfg.T0) / self.cfg.Q
            fs = [np.exp(-1j * dt * coef * g.kvec("xi"))]
        elif name == "dilation":
            # eigenphase exp(+i dt xi sum_i lam_i) in the D-eigenbasis of every p axis
            xi = g.coord("xi")
            lam = 0.0
            for i in range(1, n + 1):
                shape = [1] * g.ndim
                shape[g.index(f"p{i}")] = -1
                lam = lam + self.blocks[f"p{i}"].eigvals.reshape(shape)
            fs = [np.exp(1j * dt * xi * lam)]
        else:
            raise KeyError(name)
        fs = self._combine(fs)
        self._cache[key] = fs
        return fs

    # frame bookkeeping ---------------------------------------------------
    def _switch(self, a, frames, want):
        for group, target in want.items():
            if frames.get(group, False) != target and self.axes[group]:
                fft_axes(a, self.axes[group], inverse=not target, inplace=True)
            frames[group] = target
        return a

    def _run(self, a, ops, frames):
        for name, dt in ops:
            if dt == 0.0:
                continue
            if name not in _REQUIRES:
                raise KeyError(f"unknown op {name!r}")
            if name in ("dilation", "thermo") and not self.grid.has_xi:
                raise ValueError(f"{name} needs a xi axis")
            self._switch(a, frames, _REQUIRES[name])
            if name == "dilation":
                for lbl in self.blocks:
                    ax = self.grid.index(lbl) - self.grid.ndim
                    a = _apply_along(self.blocks[lbl].eigvecs_h, a, ax)
                a *= self._factors(name, dt)[0]
                for lbl in self.blocks:
                    ax = self.grid.index(lbl) - self.grid.ndim
                    a = _apply_along(self.blocks[lbl].eigvecs, a, ax)
            else:
                for f in self._factors(name, dt):
                    a *= f
        return a

    def _prepare(self, state, inplace):
        amp = state.amp if isinstance(state, KvnState) else state
        if amp.shape[-self.grid.ndim:] != self.grid.shape:
            raise ValueError(f"field shape {amp.shape} does not match grid {self.grid.shape}")
        if inplace and amp.dtype == np.complex128 and amp.flags.c_contiguous:
            return amp
        return np.array(amp, dtype=np.complex128, order="C", copy=True)

    def _finish(self, state, a):
        return KvnState(self.grid, a) if isinstance(state, KvnState) else a

    def apply_ops(self, state, ops, inplace=False):
        """Apply ``ops = [(name, dt), ...]`` left to right (first op acts first)."""
        a = self._prepare(state, inplace)
        frames = {}
        a = self._run(a, ops, frames)
        a = self._switch(a, frames, {g: False for g in frames})
        return self._finish(state, a)

    # single blocks -----------------------------------------------------
    def drift(self, state, dt):
        return self.apply_ops(state, [("drift", dt)])

    def kick(self, state, dt):
        return self.apply_ops(state, [("kick", dt)])

    def dilation(self, state, dt):
        return self.apply_ops(state, [("dilation", dt)])

    def thermostat(self, state, dt):
        return self.apply_ops(state, [("thermo", dt)])

    # composite steps ---------------------------------------------------
    def inner_ops(self, dt):
        """The middle factor ``X`` of ``U = A X A`` with ``A = U1(dt/2)``."""
        if self.cfg.ensemble == "NVE":
            return [("kick", dt)]
        h = 0.5 * dt
        return [("kick", h), ("dilation", h), ("thermo", dt), ("dilation", h), ("kick", h)]

    def step_ops(self, dt=None):
        dt = self.cfg.dt if dt is None else dt
        return [("drift", 0.5 * dt)] + self.inner_ops(dt) + [("drift", 0.5 * dt)]

    def step(self, state, dt=None, inplace=False):
        return self.apply_ops(state, self.step_ops(dt), inplace=inplace)

    def evolve(self, state, n_steps, dt=None, inplace=False):
        """``n_steps`` palindromic steps with adjacent half drifts fused."""
        dt = self.cfg.dt if dt is None else dt
        if n_steps <= 0:
            return self._finish(state, self._prepare(state, inplace))
        ops = [("drift", 0.5 * dt)]
        for s in range(n_steps):
            ops += self.inner_ops(dt)
            ops.append(("drift", dt if s < n_steps - 1 else 0.5 * dt))
        return self.apply_ops(state, ops, inplace=inplace)

    def correlation(self, alpha, n_steps, dt=None) -> np.ndarray:
        """``<alpha|U^s|alpha>`` for ``s = 0..n_steps`` (complex).

        Uses ``U^s = A (X C)^(s-1) X A`` with ``C = A^2``: the state
        ``phi_s = (X C)^(s-1) X A alpha`` is advanced and projected on
        ``A^dag alpha`` in whatever Fourier frame it happens to be in.
        """
        dt = self.cfg.dt if dt is None else dt
        a0 = self._prepare(alpha, False)
        out = np.empty(n_steps + 1, dtype=np.complex128)
        out[0] = np.vdot(a0, a0)
        if n_steps == 0:
            return out
        h = 0.5 * dt
        bra = self.apply_ops(a0, [("drift", -h)])
        ket = self.apply_ops(a0, [("drift", h)])
        inner = self.inner_ops(dt)
        frames = {}
        ket = self._run(ket, inner, frames)
        bra_frames = {}
        bra = self._switch(bra, bra_frames, dict(frames))
        out[1] = np.vdot(bra, ket)
        for s in range(2, n_steps + 1):
            ket = self._run(ket, [("drift", dt)] + inner, frames)
            out[s] = np.vdot(bra, ket)
        return out

    # dense oracle ------------------------------------------------------
    def dense_generator(self, blocks=None, max_dim=4096) -> np.ndarray:
        return assemble_dense_generator(self.grid, self.model, self.cfg, blocks, max_dim)


def _embed(grid: PhaseGrid, mats: dict) -> np.ndarray:
    """Kronecker product with ``mats[axis_index]`` on listed axes, identity elsewhere."""
    out = np.ones((1, 1), dtype=np.complex128)
    for i, ax in enumerate(grid.axes):
        out = np.kron(out, mats.get(i, np.eye(ax.N)))
    return out


def _lambda(axis: AxisSpec) -> np.ndarray:
    F = dft_matrix(axis.N)
    return F.conj().T @ np.diag(wavenumbers(axis)) @ F


def assemble_dense_generator(grid: PhaseGrid, model, cfg: StepConfig, blocks=None,
                             max_dim: int = 4096) -> np.ndarray:
    """Dense ``H1 + H2 (+ H3 + H4)`` for small grids (test oracle).

    ``blocks`` restricts the sum, e.g. ``("H1",)``; by default NVE returns
    ``H1 + H2`` and NVT the full four-block generator.
    """
    dim = grid.total_dim
    if dim > max_dim:
        raise ValueError(f"dense generator limited to {max_dim} states, grid has {dim}")
    if blocks is None:
        blocks = ("H1", "H2", "H3", "H4") if cfg.ensemble == "NVT" else ("H1", "H2")
    n = grid.n_particles
    m = model.masses
    full = lambda arr: np.broadcast_to(arr, grid.shape).ravel()
    H = np.zeros((dim, dim), dtype=np.complex128)
    qs = [grid.coord(f"q{i}") for i in range(1, n + 1)]
    for i in range(1, n + 1):
        qi, pi = grid.index(f"q{i}"), grid.index(f"p{i}")
        if "H1" in blocks:
            lam = _embed(grid, {qi: _lambda(grid.axes[qi])})
            H += np.diag(full(grid.coord(f"p{i}") / m[i - 1])) @ lam
        if "H2" in blocks:
            lam = _embed(grid, {pi: _lambda(grid.axes[pi])})
            H += np.diag(full(model.forces(*qs)[i - 1])) @ lam
        if "H3" in blocks:
            D = _embed(grid, {pi: dilation_matrix(grid.axes[pi])})
            H -= np.diag(full(grid.coord("xi"))) @ D
    if "H4" in blocks:
        xi = grid.index("xi")
        ke = 0.0
        for i in range(1, n + 1):
            ke = ke + grid.coord(f"p{i}") ** 2 / m[i - 1]
        coef = (ke - cfg.n_f(n) * cfg.T0) / cfg.Q
        H += np.diag(full(coef)) @ _embed(grid, {xi: _lambda(grid.axes[xi])})
    return H


# function-style wrappers ------------------------------------------------

def apply_drift_half(state: KvnState, model, cfg: StepConfig) -> KvnState:
    return Propagator(state.grid, model, cfg).drift(state, 0.5 * cfg.dt)


def apply_kick(state: KvnState, model, cfg: StepConfig, dt: float | None = None) -> KvnState:
    return Propagator(state.grid, model, cfg).kick(state, cfg.dt if dt is None else dt)


def apply_dilation(state: KvnState, model, cfg: StepConfig, dt: float | None = None) -> KvnState:
    return Propagator(state.grid, model, cfg).dilation(state, 0.5 * cfg.dt if dt is None else dt)


def apply_thermostat_advection(state: KvnState, model, cfg: StepConfig, dt: float | None = None) -> KvnState:
    return Propagator(state.grid, model, cfg).thermostat(state, cfg.dt if dt is None else dt)


def step(state: KvnState, model, cfg: StepConfig) -> KvnState:
    return Propagator(state.grid, model, cfg).step(state)
