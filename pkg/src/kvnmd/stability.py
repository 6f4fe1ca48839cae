"""Kinetic-temperature drift scans for the one-particle Nose-Hoover cosine system.

A canonical extended state is propagated with the NVT step and the relative
drift ``|T_kin(T_sim) - T0| / T0`` is recorded while one discretization
parameter (a boundary width in units of sigma, or a grid size) is varied.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .engine import Propagator, StepConfig
from .phase_space import PhaseGrid, encode_canonical, expectation, p_axis, q_axis, xi_axis
from .potentials import cosine_1p
from .readout import ResourceGuardError

SCAN_AXES = ("xi_boundary", "p_boundary", "N_xi", "N_p")
DEFAULT_DT_SET = (0.01, 0.05, 0.1)
STATE_BUDGET = 1 << 24


@dataclass
class ScanConfig:
    scan_axis: str
    values: list
    dt_set: tuple = DEFAULT_DT_SET
    T_sim: float = 240.0
    n_q: int = 32
    n_p: int = 64
    n_xi: int = 64
    p_sigmas: float = 8.0
    xi_sigmas: float = 8.0
    base: dict = field(default_factory=lambda: {"V0": 1.0, "m": 1.0, "T0": 1.0, "Q": 1.0})

    def __post_init__(self):
        if self.scan_axis not in SCAN_AXES:
            raise ValueError(f"scan_axis must be one of {SCAN_AXES}, got {self.scan_axis!r}")
        if not self.values:
            raise ValueError("empty scan")
        if not self.T_sim > 0 or any(not dt > 0 for dt in self.dt_set):
            raise ValueError("T_sim and every dt must be positive")
        for n in (self.n_q, self.n_p, self.n_xi):
            if n < 2 or n & (n - 1):
                raise ValueError(f"grid sizes must be powers of two, got {n}")

    def point(self, value) -> dict:
        """Grid parameters for one scan value."""
        p = {"n_p": self.n_p, "n_xi": self.n_xi, "p_sigmas": self.p_sigmas, "xi_sigmas": self.xi_sigmas}
        key = {"xi_boundary": "xi_sigmas", "p_boundary": "p_sigmas", "N_xi": "n_xi", "N_p": "n_p"}[self.scan_axis]
        p[key] = value
        for k in ("n_p", "n_xi"):
            n = int(p[k])
            if n < 2 or n & (n - 1):
                raise ValueError(f"{k} must be a power of two, got {p[k]}")
            p[k] = n
        return p


@dataclass
class DriftResult:
    value: float
    delta_T: dict
    T_kin: dict


def tail_fraction(n_sigma: float) -> float:
    """Relative Gaussian density at ``n_sigma`` standard deviations."""
    if n_sigma < 0:
        raise ValueError("n_sigma must be non-negative")
    return math.exp(-0.5 * n_sigma * n_sigma)


def kinetic_temperature(state, masses) -> float:
    """``sum_i <p_i^2>/m_i / N`` read off the grid density."""
    g = state.grid
    return sum(expectation(state, g.coord(f"p{i}") ** 2) / m
               for i, m in enumerate(masses, start=1)) / len(masses)


def drift_grid(n_q: int, n_p: int, n_xi: int, p_max: float, xi_max: float) -> PhaseGrid:
    nq, npb, nxb = (int(round(math.log2(n))) for n in (n_q, n_p, n_xi))
    return PhaseGrid((q_axis(1, nq), p_axis(1, npb, p_max), xi_axis(nxb, xi_max)))


def drift_point(cfg: ScanConfig, value, dt: float, budget: int = STATE_BUDGET) -> tuple:
    """``(delta_T, T_kin)`` after ``T_sim`` for one scan value and time step."""
    b = cfg.base
    pp = cfg.point(value)
    if cfg.n_q * pp["n_p"] * pp["n_xi"] > budget:
        raise ResourceGuardError(f"grid of {cfg.n_q * pp['n_p'] * pp['n_xi']} points exceeds {budget}")
    sig_p = math.sqrt(b["m"] * b["T0"])
    sig_xi = math.sqrt(b["T0"] / b["Q"])
    grid = drift_grid(cfg.n_q, pp["n_p"], pp["n_xi"], pp["p_sigmas"] * sig_p, pp["xi_sigmas"] * sig_xi)
    model = cosine_1p(b["V0"], b["m"])
    step_cfg = StepConfig(dt=dt, ensemble="NVT", T0=b["T0"], Q=b["Q"])
    psi = encode_canonical(grid, model, 1.0 / b["T0"], b["Q"])
    n_steps = int(round(cfg.T_sim / dt))
    out = Propagator(grid, model, step_cfg).evolve(psi, n_steps)
    T = kinetic_temperature(out, model.masses)
    return abs(T - b["T0"]) / b["T0"], T


def run_scan(cfg: ScanConfig, budget: int = STATE_BUDGET) -> list:
    results = []
    for v in cfg.values:
        dT, Tk = {}, {}
        for dt in cfg.dt_set:
            dT[dt], Tk[dt] = drift_point(cfg, v, dt, budget)
        results.append(DriftResult(float(v), dT, Tk))
    return results


def scan_rows(results: list) -> list:
    """Flatten to ``(param, dt, delta_T)`` rows."""
    return [(r.value, dt, r.delta_T[dt]) for r in results for dt in sorted(r.delta_T)]
