"""Pauli decompositions and CX cost models for the propagator circuits.

Pauli strings are written most-significant qubit first: ``letters[0]`` acts
on the qubit carrying the ``2**(n-1)`` digit of the basis index, matching
``numpy.kron`` ordering.

A string is labelled internally by bit masks ``(x, z)``: qubit ``b`` carries
``I, X, Z, Y`` for ``(x_b, z_b) = (0,0), (1,0), (0,1), (1,1)`` and the string
equals ``i**popcount(x & z) X^x Z^z``. The Hilbert-Schmidt coefficients
``Tr(P D)/2**n`` of every string sharing one ``x`` are a Walsh-Hadamard
transform of the diagonal ``D[j, j ^ x]``, so a full decomposition costs
``O(4**n n)`` rather than ``O(8**n)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ._accel import njit, use_numba
from .engine import dilation_matrix
from .phase_space import AxisSpec

ZERO_TOL = 1e-12
_PAULI = {
    "I": np.eye(2, dtype=np.complex128),
    "X": np.array([[0, 1], [1, 0]], dtype=np.complex128),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=np.complex128),
    "Z": np.array([[1, 0], [0, -1]], dtype=np.complex128),
}
_LETTER = {(0, 0): "I", (1, 0): "X", (0, 1): "Z", (1, 1): "Y"}


@dataclass(frozen=True)
class PauliString:
    letters: str

    def __post_init__(self):
        if not self.letters or set(self.letters) - set("IXYZ"):
            raise ValueError(f"invalid Pauli string {self.letters!r}")

    @property
    def n(self) -> int:
        return len(self.letters)

    @property
    def weight(self) -> int:
        return sum(c != "I" for c in self.letters)

    @property
    def y_count(self) -> int:
        return self.letters.count("Y")

    def matrix(self) -> np.ndarray:
        out = np.ones((1, 1), dtype=np.complex128)
        for c in self.letters:
            out = np.kron(out, _PAULI[c])
        return out

    @classmethod
    def from_masks(cls, x: int, z: int, n: int) -> "PauliString":
        return cls("".join(_LETTER[((x >> b) & 1, (z >> b) & 1)] for b in reversed(range(n))))


@dataclass
class PauliDecomposition:
    n_qubits: int
    terms: list
    source: str = ""

    @property
    def n_terms(self) -> int:
        return len(self.terms)

    @property
    def weight_sum(self) -> int:
        return sum(p.weight for p, _ in self.terms)

    def odd_y_violations(self) -> int:
        return sum(1 for p, _ in self.terms if p.y_count % 2 == 0)

    def reconstruct(self) -> np.ndarray:
        dim = 1 << self.n_qubits
        out = np.zeros((dim, dim), dtype=np.complex128)
        for p, a in self.terms:
            out += a * p.matrix()
        return out

    def coefficient(self, letters: str) -> float:
        for p, a in self.terms:
            if p.letters == letters:
                return a
        return 0.0


@dataclass
class CostReport:
    model_name: str
    inputs: dict
    cx_count: float
    breakdown: dict = field(default_factory=dict)


# Hilbert-Schmidt projection -------------------------------------------------

@njit(cache=True)
def _wht_inplace(v):
    n = v.shape[0]
    h = 1
    while h < n:
        for start in range(0, n, 2 * h):
            for j in range(start, start + h):
                a = v[j]
                b = v[j + h]
                v[j] = a + b
                v[j + h] = a - b
        h *= 2


@njit(cache=True)
def _nb_pauli_coeffs(D):
    N = D.shape[0]
    out = np.empty((N, N), dtype=np.complex128)
    v = np.empty(N, dtype=np.complex128)
    for x in range(N):
        for j in range(N):
            v[j] = D[j, j ^ x]
        _wht_inplace(v)
        for z in range(N):
            c = x & z
            k = 0
            while c:
                k += c & 1
                c >>= 1
            ph = (1.0 + 0.0j, 1.0j, -1.0 + 0.0j, -1.0j)[k % 4]
            out[x, z] = ph * v[z] / N
    return out


def _np_pauli_coeffs(D):
    N = D.shape[0]
    j = np.arange(N)
    V = D[j[None, :], j[None, :] ^ j[:, None]]          # V[x, j] = D[j, j^x]
    n = N.bit_length() - 1
    V = V.astype(np.complex128)
    for b in range(n):
        W = V.reshape(N, N >> (b + 1), 2, 1 << b)
        a, c = W[:, :, 0].copy(), W[:, :, 1].copy()
        W[:, :, 0] = a + c
        W[:, :, 1] = a - c
    pop = np.array([bin(k).count("1") for k in range(N)])
    ph = (1j) ** (pop[j[:, None] & j[None, :]] % 4)
    return ph * V / N


def pauli_coefficients(D: np.ndarray) -> np.ndarray:
    """``a[x, z] = Tr(P_{x,z} D) / N`` for every string of an ``N x N`` matrix."""
    D = np.ascontiguousarray(D, dtype=np.complex128)
    N = D.shape[0]
    if D.shape != (N, N) or N & (N - 1):
        raise ValueError("matrix must be square with power-of-two size")
    return _nb_pauli_coeffs(D) if use_numba() else _np_pauli_coeffs(D)


def pauli_decompose(D: np.ndarray, source: str = "", tol: float = ZERO_TOL,
                    real: bool = True) -> PauliDecomposition:
    """Keep every string with ``|a| > tol``; ``real`` drops the (zero) imaginary parts."""
    coeffs = pauli_coefficients(D)
    n = D.shape[0].bit_length() - 1
    terms = []
    for x, z in zip(*np.nonzero(np.abs(coeffs) > tol)):
        a = coeffs[x, z]
        terms.append((PauliString.from_masks(int(x), int(z), n), float(a.real) if real else complex(a)))
    terms.sort(key=lambda t: t[0].letters)
    return PauliDecomposition(n, terms, source)


def decompose_dp(n_p: int, p_lo: float = -6.0, p_hi: float = 6.0) -> PauliDecomposition:
    """Pauli expansion of the cyclic centered-difference dilation operator."""
    if not 2 <= n_p <= 8:
        raise ValueError(f"decompose_dp supports 2 <= n_p <= 8, got {n_p}")
    D = dilation_matrix(AxisSpec("p1", n_p, p_lo, p_hi))
    return pauli_decompose(D, source=f"D_p(n_p={n_p})")


def n_dp_closed(n_p: int) -> int:
    """Number of Pauli terms of the cyclic dilation operator, ``(7/4) 2**n - (n+2)``."""
    if n_p < 2:
        raise ValueError("closed forms hold for n_p >= 2")
    return 7 * (1 << (n_p - 2)) - (n_p + 2)


def w_dp_closed(n_p: int) -> int:
    """Summed Pauli weight, ``(7/4) n 2**n - 3 2**n + 3``."""
    if n_p < 2:
        raise ValueError("closed forms hold for n_p >= 2")
    return 7 * n_p * (1 << (n_p - 2)) - 3 * (1 << n_p) + 3


def xi_z_expansion(n_xi: int, xi_lo: float, xi_hi: float) -> PauliDecomposition:
    """Diagonal coordinate operator of a xi register as I/Z strings."""
    if n_xi < 1:
        raise ValueError("n_xi must be >= 1")
    vals = AxisSpec("xi", n_xi, xi_lo, xi_hi).values()
    return pauli_decompose(np.diag(vals).astype(np.complex128), source=f"xi(n_xi={n_xi})")


def h3_pauli_terms(n_p: int, n_xi: int, p_lo: float = -6.0, p_hi: float = 6.0,
                   xi_lo: float = -6.0, xi_hi: float = 6.0) -> list:
    """``(Z_nu (x) P_mu, coefficient)`` pairs of ``xi (x) D_p``."""
    zs = xi_z_expansion(n_xi, xi_lo, xi_hi).terms
    ds = decompose_dp(n_p, p_lo, p_hi).terms
    return [(PauliString(z.letters + p.letters), cz * cp) for z, cz in zs for p, cp in ds]


def rotation_cx(weight: int) -> int:
    """CX count of one Pauli-exponential rotation with a CNOT ladder."""
    return 2 * (weight - 1) if weight > 1 else 0


def h3_pauli_cx(n_p: int, n_xi: int, p_lo: float = -6.0, p_hi: float = 6.0,
                xi_lo: float = -6.0, xi_hi: float = 6.0) -> int:
    """CX count of one first-order Pauli-evolution layer of the dilation block."""
    return sum(rotation_cx(p.weight) for p, _ in h3_pauli_terms(n_p, n_xi, p_lo, p_hi, xi_lo, xi_hi))


def nve_cx_model(n: int) -> int:
    """Fitted CX count of one NVE step, ``3n^2 + 2n - 21`` with ``n = n_q + n_p``."""
    if n < 3:
        raise ValueError("NVE model needs n >= 3")
    return 3 * n * n + 2 * n - 21


NVT_FITS = {2: (5.06, 11.2, 77.0), 3: (4.96, 19.2, 69.0), 4: (4.85, 27.2, 68.0)}


def nvt_cx_fit(n_p: int, n_xi: int) -> float:
    """Empirical NVT step fits ``a n_p 2**n_p + b 2**n_p + c`` for ``n_xi`` in 2..4."""
    if n_xi not in NVT_FITS:
        raise ValueError(f"NVT fits exist only for n_xi in {sorted(NVT_FITS)}, got {n_xi}")
    a, b, c = NVT_FITS[n_xi]
    return a * n_p * 2.0 ** n_p + b * 2.0 ** n_p + c


QSD_C1 = 23.0 / 48.0


def qsd_cx_model(n_total: int, c1: float = QSD_C1) -> float:
    """Generic-unitary synthesis cost ``c1 * 4**n_total``."""
    if not c1 > 0:
        raise ValueError("c1 must be positive")
    return c1 * 4.0 ** n_total


# Bessel functions by Miller's downward recurrence ------------------------------

def bessel_j_all(order_max: int, x: float, extra: int = 40) -> np.ndarray:
    """``J_0(x) .. J_order_max(x)`` by normalized downward recurrence."""
    if x == 0.0:
        out = np.zeros(order_max + 1)
        out[0] = 1.0
        return out
    ax = abs(x)
    start = int(max(order_max, ax) + extra + 10 * math.sqrt(max(order_max, ax) + extra))
    start += start % 2
    j_next, j_cur = 0.0, 1e-300
    vals = np.zeros(start + 1)
    vals[start] = j_cur
    for k in range(start, 0, -1):
        j_next, j_cur = j_cur, 2.0 * k / ax * j_cur - j_next
        vals[k - 1] = j_cur
        if abs(j_cur) > 1e250:
            vals[k - 1:] *= 1e-250
            j_next *= 1e-250
            j_cur *= 1e-250
    norm = vals[0] + 2.0 * vals[2::2].sum()
    if not np.isfinite(norm) or norm == 0.0:
        raise ArithmeticError(f"Bessel recurrence failed at x={x}")
    out = vals[: order_max + 1] / norm
    if x < 0:
        out[1::2] *= -1.0
    return out


def bessel_series(n: int, x: float, terms: int = 60) -> float:
    """Power series of ``J_n(x)``; accurate for small ``|x|`` (validation only)."""
    s = 0.0
    for k in range(terms):
        s += (-1) ** k * (x / 2.0) ** (2 * k + n) / (math.factorial(k) * math.factorial(k + n))
    return s


def qsp_degree(tau: float, eps: float, k_max: int = 100_000) -> int:
    """Smallest ``K`` with ``|J_{K+1}(tau)| < eps/2``."""
    size = 64
    while True:
        J = bessel_j_all(size, tau)
        hits = np.nonzero(np.abs(J[1:]) < 0.5 * eps)[0]
        if hits.size:
            return int(hits[0])
        if size > k_max:
            raise ArithmeticError("no truncation degree found")
        size *= 2


def qsp_best_case(n_p: int, n_xi: int, eps_qsp: float, dt: float,
                  xi_max: float | None = None, p_grid: np.ndarray | None = None,
                  p_lo: float = -6.0, p_hi: float = 6.0,
                  xi_lo: float = -4.0, xi_hi: float = 4.0) -> CostReport:
    """Best-case sparse-access QSP cost of one dilation-block exponential.

    ``xi_max`` defaults to the largest centered xi magnitude of an ``n_xi``
    register on ``[xi_lo, xi_hi)``; ``p_grid`` defaults to the ``n_p`` grid on
    ``[p_lo, p_hi)``. The sparse norm is ``2 xi_max max|gamma_j|``.
    """
    if not 0 < eps_qsp < 1 or not dt > 0:
        raise ValueError("need 0 < eps_qsp < 1 and dt > 0")
    if p_grid is None:
        p_grid = AxisSpec("p1", n_p, p_lo, p_hi).values()
    p = np.asarray(p_grid, dtype=float)
    gamma = (p + np.roll(p, -1)) / (4.0 * (p[1] - p[0]))
    if xi_max is None:
        d_xi = (xi_hi - xi_lo) / (1 << n_xi)
        xi_max = ((1 << n_xi) - 1) * d_xi / 2.0
    alpha = 2.0 * xi_max * float(np.max(np.abs(gamma)))
    tau = dt * alpha
    K = qsp_degree(tau, eps_qsp)
    n = n_p + n_xi
    c_be = 6 * n + 3 * n + int(math.floor(n * math.log2(1.0 / eps_qsp))) + n
    n_be = 4 * K + 3
    n_refl = 2 * K + 2
    breakdown = {"block_encodings": n_be * c_be, "reflections": n_refl * 4 * n}
    return CostReport("qsp_best_case",
                      {"n_p": n_p, "n_xi": n_xi, "eps_qsp": eps_qsp, "dt": dt,
                       "alpha": alpha, "tau": tau, "K": K, "C_BE": c_be, "xi_max": xi_max},
                      sum(breakdown.values()), breakdown)


def h3_cost_table(n_totals, n_xi: int = 4, c1: float = QSD_C1, eps_qsp: float = 1e-6,
                  dt: float = 0.01) -> list:
    """Rows ``(n_total, model, cx_count)`` for the dilation-block cost comparison."""
    rows = []
    for nt in n_totals:
        n_p = nt - n_xi
        if 2 <= n_p <= 8:
            rows.append((nt, "pauli", h3_pauli_cx(n_p, n_xi)))
        rows.append((nt, "qsd", qsd_cx_model(nt, c1)))
        if n_p >= 1:
            rows.append((nt, "qsp_best", qsp_best_case(n_p, n_xi, eps_qsp, dt).cx_count))
    return rows
