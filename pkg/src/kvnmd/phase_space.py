"""Discretized phase-space axes, grids, KvN states and diagonal observables.

Axes are labelled ``q1, q2, ...`` (positions), ``p1, p2, ...`` (momenta) and
``xi`` (the Nose-Hoover friction variable). Grid point ``j`` on an axis sits
at ``lo + j*delta`` with ``delta = (hi - lo)/N`` (half-open window, no
endpoint duplication). Position axes are periodic on ``[0, 2*pi)``; momentum
and friction axes are truncated windows that the spectral operators still
treat as cyclic, so the window must be wide enough for the Gaussian tails to
be negligible at the edge.

Amplitude fields are stored as one C-ordered complex array whose shape is the
tuple of axis sizes; the first axis varies slowest. Optional leading batch
axes are allowed everywhere a field is accepted.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

_LABEL = re.compile(r"^(q|p)([1-9][0-9]*)$|^xi$")


@dataclass(frozen=True)
class AxisSpec:
    """One binary-encoded grid axis."""

    label: str
    n_qubits: int
    lo: float
    hi: float
    periodic: bool = False

    def __post_init__(self):
        if not _LABEL.match(self.label):
            raise ValueError(f"axis label must be q<i>, p<i> or xi, got {self.label!r}")
        if int(self.n_qubits) != self.n_qubits or self.n_qubits < 1:
            raise ValueError(f"n_qubits must be an integer >= 1, got {self.n_qubits}")
        if not self.hi > self.lo:
            raise ValueError(f"axis {self.label}: need hi > lo, got [{self.lo}, {self.hi})")

    @property
    def N(self) -> int:
        return 1 << self.n_qubits

    @property
    def delta(self) -> float:
        return (self.hi - self.lo) / self.N

    @property
    def kind(self) -> str:
        return self.label[0] if self.label != "xi" else "xi"

    @property
    def particle(self) -> int | None:
        """1-based particle index for q/p axes, ``None`` for xi."""
        return None if self.label == "xi" else int(self.label[1:])

    def values(self) -> np.ndarray:
        return self.lo + np.arange(self.N) * self.delta

    def wavenumbers(self) -> np.ndarray:
        return wavenumbers(self)


def q_axis(i: int, n_qubits: int) -> AxisSpec:
    return AxisSpec(f"q{i}", n_qubits, 0.0, 2.0 * math.pi, periodic=True)


def p_axis(i: int, n_qubits: int, p_max: float) -> AxisSpec:
    return AxisSpec(f"p{i}", n_qubits, -p_max, p_max, periodic=False)


def xi_axis(n_qubits: int, xi_max: float) -> AxisSpec:
    return AxisSpec("xi", n_qubits, -xi_max, xi_max, periodic=False)


def wavenumbers(axis: AxisSpec) -> np.ndarray:
    """Fourier-conjugate wavenumbers of ``axis`` in standard DFT order.

    ``k_j = 2*pi*f_j/(N*delta)`` with ``f_j = j`` for ``j < N/2`` and
    ``j - N`` otherwise; the Nyquist entry is negative.
    """
    if axis.N < 2:
        raise ValueError("wavenumbers need at least two grid points")
    f = np.fft.fftfreq(axis.N) * axis.N
    return 2.0 * math.pi * f / (axis.N * axis.delta)


@dataclass(frozen=True)
class PhaseGrid:
    """Ordered tensor product of axes; the first axis is the slowest index."""

    axes: tuple

    def __post_init__(self):
        object.__setattr__(self, "axes", tuple(self.axes))
        labels = [a.label for a in self.axes]
        if len(set(labels)) != len(labels):
            raise ValueError(f"duplicate axis labels in {labels}")
        qs = sorted(a.particle for a in self.axes if a.kind == "q")
        ps = sorted(a.particle for a in self.axes if a.kind == "p")
        if qs != ps or qs != list(range(1, len(qs) + 1)):
            raise ValueError(f"q and p axes must pair up as 1..n, got {labels}")

    @property
    def shape(self) -> tuple:
        return tuple(a.N for a in self.axes)

    @property
    def ndim(self) -> int:
        return len(self.axes)

    @property
    def total_dim(self) -> int:
        return int(np.prod(self.shape, dtype=np.int64))

    @property
    def labels(self) -> tuple:
        return tuple(a.label for a in self.axes)

    @property
    def n_particles(self) -> int:
        return sum(1 for a in self.axes if a.kind == "q")

    @property
    def has_xi(self) -> bool:
        return "xi" in self.labels

    def index(self, label: str) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            raise KeyError(f"grid has no axis {label!r}; axes are {self.labels}") from None

    def axis(self, label: str) -> AxisSpec:
        return self.axes[self.index(label)]

    def q_indices(self) -> list:
        return [self.index(f"q{i}") for i in range(1, self.n_particles + 1)]

    def p_indices(self) -> list:
        return [self.index(f"p{i}") for i in range(1, self.n_particles + 1)]

    def coord(self, label: str) -> np.ndarray:
        """Grid values of one axis shaped to broadcast against the full grid."""
        i = self.index(label)
        shape = [1] * self.ndim
        shape[i] = self.axes[i].N
        return self.axes[i].values().reshape(shape)

    def kvec(self, label: str) -> np.ndarray:
        """Wavenumbers of one axis shaped to broadcast against the full grid."""
        i = self.index(label)
        shape = [1] * self.ndim
        shape[i] = self.axes[i].N
        return wavenumbers(self.axes[i]).reshape(shape)


def make_grid(n_particles: int, n_q: int, n_p: int, p_max: float,
              n_xi: int | None = None, xi_max: float | None = None) -> PhaseGrid:
    """Bundled-register grid ``q1..qn, p1..pn[, xi]``."""
    axes = [q_axis(i, n_q) for i in range(1, n_particles + 1)]
    axes += [p_axis(i, n_p, p_max) for i in range(1, n_particles + 1)]
    if n_xi is not None:
        if xi_max is None:
            raise ValueError("xi_max is required with n_xi")
        axes.append(xi_axis(n_xi, xi_max))
    return PhaseGrid(tuple(axes))


def default_p_max(m: float = 1.0, T0: float = 1.0, n_sigma: float = 6.0) -> float:
    return n_sigma * math.sqrt(m * T0)


def default_xi_max(Q: float = 1.0, T0: float = 1.0, n_sigma: float = 6.0) -> float:
    return n_sigma * math.sqrt(T0 / Q)


@dataclass
class KvnState:
    """Complex amplitude field over a :class:`PhaseGrid`."""

    grid: PhaseGrid
    amp: np.ndarray

    def __post_init__(self):
        self.amp = np.ascontiguousarray(self.amp, dtype=np.complex128)
        if self.amp.shape[-self.grid.ndim:] != self.grid.shape:
            raise ValueError(f"amplitude shape {self.amp.shape} does not end with grid shape {self.grid.shape}")

    def norm(self) -> float:
        return float(np.sqrt(np.sum(np.abs(self.amp) ** 2)))

    def density(self) -> np.ndarray:
        return np.abs(self.amp) ** 2

    def copy(self) -> "KvnState":
        return KvnState(self.grid, self.amp.copy())

    def inner(self, other: "KvnState") -> complex:
        """``<self|other>``."""
        return complex(np.vdot(self.amp, other.amp))


@dataclass
class GridFunction:
    """Real diagonal observable ``A(q, p, xi)`` on a grid.

    ``values`` may be any array that broadcasts to the grid shape, so
    factorized observables such as ``p1**2`` stay small.
    """

    grid: PhaseGrid
    values: np.ndarray = field(default=None)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        np.broadcast_shapes(v.shape, self.grid.shape)
        if not np.all(np.isfinite(v)):
            raise ValueError("observable values must be finite")
        self.values = v

    def full(self) -> np.ndarray:
        return np.broadcast_to(self.values, self.grid.shape)


def kinetic_energy_field(grid: PhaseGrid, masses: Sequence[float]) -> np.ndarray:
    """``sum_i p_i^2 / m_i`` broadcastable to the grid (twice the kinetic energy)."""
    out = 0.0
    for i, m in enumerate(masses, start=1):
        out = out + grid.coord(f"p{i}") ** 2 / m
    return np.asarray(out)


def encode_canonical(grid: PhaseGrid, model, beta: float, Q: float | None = None) -> KvnState:
    """Equilibrium amplitudes ``exp(-beta*H/2) [* exp(-beta*Q*xi^2/4)]``.

    The state is real, non-negative and unit-normalized; the grid cell
    volumes are absorbed into the normalization.
    """
    if not beta > 0:
        raise ValueError(f"beta must be positive, got {beta}")
    if model.n_particles != grid.n_particles:
        raise ValueError("model and grid disagree on the number of particles")
    qs = [grid.coord(f"q{i}") for i in range(1, grid.n_particles + 1)]
    bh = beta * (model.energy(*qs) + 0.5 * kinetic_energy_field(grid, model.masses))
    if grid.has_xi:
        if Q is None or not Q > 0:
            raise ValueError("a grid with a xi axis needs Q > 0")
        bh = bh + 0.5 * beta * Q * grid.coord("xi") ** 2
    bh = np.broadcast_to(bh, grid.shape)
    amp = np.exp(-0.5 * (bh - bh.min()))
    amp /= np.sqrt(np.sum(amp * amp))
    return KvnState(grid, amp.astype(np.complex128))


def expectation(state: KvnState, obs) -> float:
    """``sum_j A_j |psi_j|^2``; ``obs`` is a GridFunction or a broadcastable array."""
    if isinstance(obs, GridFunction):
        if obs.grid != state.grid:
            raise ValueError("observable and state live on different grids")
        obs = obs.values
    rho = np.abs(state.amp) ** 2
    return float(np.sum(rho * obs))


def reduced_distribution(state: KvnState, keep_axes: Sequence[str]) -> np.ndarray:
    """Marginal probability over the axes in ``keep_axes`` (in grid order)."""
    keep = {state.grid.index(lbl) for lbl in keep_axes}
    nb = state.amp.ndim - state.grid.ndim
    drop = tuple(nb + i for i in range(state.grid.ndim) if i not in keep)
    return np.sum(np.abs(state.amp) ** 2, axis=drop)
