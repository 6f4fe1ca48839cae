"""Potential models with analytic forces.

Two closed-form kinds are built in:

``cosine_1p``
    ``V(q) = V0*cos(q)``, ``F(q) = V0*sin(q)``.
``coupled_cosine_2p``
    ``V(q1, q2) = V0*[cos(q1 - q2) + eps*(cos q1 + cos q2)]``.

A ``tabulated`` model wraps caller-supplied energy and force callables; no
numerical differentiation is ever attempted.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

KINDS = ("cosine_1p", "coupled_cosine_2p", "tabulated")
KIND_CODE = {"cosine_1p": 0, "coupled_cosine_2p": 1}


@dataclass(frozen=True)
class PotentialModel:
    kind: str
    V0: float = 1.0
    eps: float = 0.0
    masses: tuple = (1.0,)
    energy_fn: Callable | None = None
    force_fn: Callable | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown potential kind {self.kind!r}; expected one of {KINDS}")
        object.__setattr__(self, "masses", tuple(float(m) for m in self.masses))
        if any(m <= 0 for m in self.masses):
            raise ValueError("masses must be positive")
        want = {"cosine_1p": 1, "coupled_cosine_2p": 2}.get(self.kind)
        if want is not None and len(self.masses) != want:
            raise ValueError(f"{self.kind} needs {want} mass(es), got {len(self.masses)}")
        if self.kind == "tabulated" and (self.energy_fn is None or self.force_fn is None):
            raise ValueError("tabulated potential needs energy_fn and force_fn")

    @property
    def n_particles(self) -> int:
        return len(self.masses)

    @property
    def analytic(self) -> bool:
        return self.kind in KIND_CODE

    def energy(self, *q):
        if self.kind == "cosine_1p":
            return self.V0 * np.cos(q[0])
        if self.kind == "coupled_cosine_2p":
            q1, q2 = q
            return self.V0 * (np.cos(q1 - q2) + self.eps * (np.cos(q1) + np.cos(q2)))
        return self.energy_fn(*q)

    def forces(self, *q) -> list:
        """``[F_1, ..., F_n]`` with ``F_i = -dV/dq_i``; inputs broadcast."""
        if self.kind == "cosine_1p":
            return [self.V0 * np.sin(q[0])]
        if self.kind == "coupled_cosine_2p":
            q1, q2 = q
            s12 = np.sin(q1 - q2)
            return [self.V0 * (s12 + self.eps * np.sin(q1)),
                    self.V0 * (-s12 + self.eps * np.sin(q2))]
        return list(self.force_fn(*q))


def cosine_1p(V0: float = 1.0, m: float = 1.0) -> PotentialModel:
    return PotentialModel("cosine_1p", V0=V0, masses=(m,))


def coupled_cosine_2p(V0: float = 5.0, eps: float = 1.2, m: float = 1.0) -> PotentialModel:
    return PotentialModel("coupled_cosine_2p", V0=V0, eps=eps, masses=(m, m))


def free(n_particles: int = 1, m: float = 1.0) -> PotentialModel:
    """Zero potential, handy for ballistic checks."""
    zero = lambda *q: 0.0 * sum(np.asarray(x, dtype=float) for x in q)
    return PotentialModel("tabulated", masses=(m,) * n_particles, energy_fn=zero,
                          force_fn=lambda *q: [zero(*q) for _ in q])
