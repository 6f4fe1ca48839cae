import math

import numpy as np
import pytest
import scipy.linalg

from kvnmd.engine import (DilationBlock, Propagator, StepConfig, apply_dilation, apply_drift_half,
                          apply_kick, apply_thermostat_advection, assemble_dense_generator,
                          dilation_matrix, step)
from kvnmd.phase_space import (AxisSpec, KvnState, PhaseGrid, encode_canonical, make_grid, p_axis,
                               q_axis, reduced_distribution, xi_axis)
from kvnmd.potentials import coupled_cosine_2p, cosine_1p, free

NVT = StepConfig(dt=0.05, ensemble="NVT")


def _peak(x, y):
    """Argmax refined by a parabola through the three top points."""
    i = int(np.argmax(y))
    if 0 < i < len(y) - 1:
        a, b, c = y[i - 1], y[i], y[i + 1]
        den = a - 2 * b + c
        if den != 0:
            return x[i] + 0.5 * (a - c) / den * (x[1] - x[0])
    return x[i]


def _random_state(grid, rng):
    a = rng.normal(size=grid.shape) + 1j * rng.normal(size=grid.shape)
    return KvnState(grid, a / np.linalg.norm(a))


def test_dilation_block_structure():
    ax = p_axis(1, 4, 6.0)
    D = dilation_matrix(ax)
    blk = DilationBlock(ax)
    assert np.max(np.abs(D - D.conj().T)) == 0.0
    V = blk.eigvecs
    assert np.max(np.abs(V.conj().T @ V - np.eye(ax.N))) < 1e-12
    assert np.max(np.abs(V @ np.diag(blk.eigvals) @ V.conj().T - D)) < 1e-12
    g = blk.gamma
    ref = sum(1j * g[j] * (np.outer(np.eye(16)[(j + 1) % 16], np.eye(16)[j])
                           - np.outer(np.eye(16)[j], np.eye(16)[(j + 1) % 16])) for j in range(16))
    np.testing.assert_allclose(D, ref, atol=0)


def test_dilation_is_symmetrized_p_lambda():
    # on smooth packets D acts like (p lambda + lambda p)/2 = -i (p d/dp + 1/2)
    ax = p_axis(1, 8, 8.0)
    p = ax.values()
    f = np.exp(-(p - 1.0) ** 2)
    exact = -1j * (p * (-2 * (p - 1.0)) * f + 0.5 * f)
    assert np.max(np.abs(dilation_matrix(ax) @ f - exact)) < 1e-2


def test_drift_identity_and_free_motion():
    g = PhaseGrid((q_axis(1, 6), p_axis(1, 5, 6.0)))
    mod = free(1)
    q = g.coord("q1")
    p = g.coord("p1")
    amp = np.exp(-((q - 1.0) ** 2) / (2 * 0.1 ** 2) - (p - 1.5) ** 2 / (2 * 0.2 ** 2))
    psi = KvnState(g, amp / np.linalg.norm(amp))
    prop = Propagator(g, mod, StepConfig(dt=0.05))
    np.testing.assert_allclose(prop.drift(psi, 0.0).amp, psi.amp, atol=1e-14)
    n = 40
    out = prop.evolve(psi, n)
    pk = g.axis("p1").values()[np.argmax(reduced_distribution(psi, ["p1"]))]
    qm = reduced_distribution(out, ["q1"])
    assert _peak(g.axis("q1").values(), qm) == pytest.approx(1.0 + n * 0.05 * pk, abs=g.axis("q1").delta)


def test_kick_shift_and_composition(rng):
    g = PhaseGrid((q_axis(1, 6), p_axis(1, 6, 6.0)))
    mod = cosine_1p(2.0)
    q = g.coord("q1")
    p = g.coord("p1")
    q0 = 1.2
    amp = np.exp(-((q - q0) ** 2) / (2 * 0.05 ** 2) - p ** 2 / (2 * 0.3 ** 2))
    psi = KvnState(g, amp / np.linalg.norm(amp))
    cfg = StepConfig(dt=0.1)
    out = apply_kick(psi, mod, cfg)
    pm = reduced_distribution(out, ["p1"])
    pv = g.axis("p1").values()
    assert _peak(pv, pm) - _peak(pv, reduced_distribution(psi, ["p1"])) == pytest.approx(
        0.1 * 2.0 * math.sin(q0), abs=g.axis("p1").delta)
    prop = Propagator(g, mod, cfg)
    st = _random_state(g, rng)
    a = prop.kick(prop.kick(st, 0.03), 0.05)
    np.testing.assert_allclose(a.amp, prop.kick(st, 0.08).amp, atol=1e-12)
    np.testing.assert_allclose(Propagator(g, free(1), cfg).kick(st, 0.3).amp, st.amp, atol=1e-13)


def test_dilation_contracts_momentum_packet():
    g = PhaseGrid((q_axis(1, 1), p_axis(1, 7, 8.0), AxisSpec("xi", 2, -1.0, 1.0)))
    xi = g.axis("xi").values()
    j = int(np.argmin(np.abs(xi - 0.5)))
    assert xi[j] == 0.5
    p = g.axis("p1").values()
    amp = np.zeros(g.shape)
    amp[:, :, j] = np.exp(-(p - 2.0) ** 2 / (2 * 0.25 ** 2))
    psi = KvnState(g, amp / np.linalg.norm(amp))
    out = apply_dilation(psi, cosine_1p(), NVT, dt=0.2)
    peak = _peak(p, reduced_distribution(out, ["p1"]))
    assert peak == pytest.approx(2.0 * math.exp(-0.1), abs=g.axis("p1").delta)
    # the xi = 0 slice is untouched
    k = int(np.argmin(np.abs(xi)))
    amp0 = np.zeros(g.shape, dtype=complex)
    amp0[:, :, k] = 1.0 / math.sqrt(2 * 128)
    np.testing.assert_allclose(apply_dilation(KvnState(g, amp0), cosine_1p(), NVT, dt=0.2).amp, amp0,
                               atol=1e-14)


def test_dilation_dense_oracle(rng):
    g = make_grid(1, 2, 4, 6.0, 2, 3.0)
    prop = Propagator(g, cosine_1p(), NVT)
    D = dilation_matrix(g.axis("p1"))
    xi = g.axis("xi").values()
    dt = 0.37
    st = _random_state(g, rng)
    got = prop.dilation(st, dt).amp
    ref = np.empty_like(st.amp)
    for k, x in enumerate(xi):
        U = scipy.linalg.expm(1j * dt * x * D)
        ref[:, :, k] = np.einsum("ab,qb->qa", U, st.amp[:, :, k])
    assert np.max(np.abs(got - ref)) < 1e-10


def test_dilation_commutes_with_q_functions(rng):
    g = make_grid(1, 3, 3, 6.0, 2, 3.0)
    prop = Propagator(g, cosine_1p(), NVT)
    st = _random_state(g, rng)
    f = np.cos(g.coord("q1")) + 2.0
    a = prop.dilation(KvnState(g, f * st.amp), 0.2).amp
    b = f * prop.dilation(st, 0.2).amp
    assert np.max(np.abs(a - b)) < 1e-13


def test_thermostat_advection():
    # both momentum points have p^2/m = T0: zero drive
    g = PhaseGrid((q_axis(1, 1), AxisSpec("p1", 1, -1.0, 3.0), xi_axis(6, 6.0)))
    xi = g.axis("xi").values()
    amp = np.exp(-xi ** 2 / (2 * 0.3 ** 2)) * np.ones(g.shape)
    psi = KvnState(g, amp / np.linalg.norm(amp))
    cfg = StepConfig(dt=0.1, ensemble="NVT", T0=1.0, Q=1.0)
    out = apply_thermostat_advection(psi, cosine_1p(), cfg, dt=0.5)
    np.testing.assert_allclose(reduced_distribution(out, ["xi"]), reduced_distribution(psi, ["xi"]),
                               atol=1e-12)
    # hot slices p = +-2: xi drifts at (p^2/m - T0)/Q = 3
    g2 = PhaseGrid((q_axis(1, 1), AxisSpec("p1", 1, -2.0, 6.0), xi_axis(6, 6.0)))
    psi2 = KvnState(g2, amp / np.linalg.norm(amp))
    out2 = apply_thermostat_advection(psi2, cosine_1p(), cfg, dt=0.5)
    assert _peak(xi, reduced_distribution(out2, ["xi"])) == pytest.approx(1.5, abs=g2.axis("xi").delta)


@pytest.mark.parametrize("ens", ["NVE", "NVT"])
def test_step_matches_dense_exponentials(ens, rng):
    mod = cosine_1p()
    g = make_grid(1, 3, 3, 6.0, 2 if ens == "NVT" else None, 3.0 if ens == "NVT" else None)
    cfg = StepConfig(dt=0.07, ensemble=ens)
    ex = lambda blk, t: scipy.linalg.expm(-1j * t * assemble_dense_generator(g, mod, cfg, (blk,)))
    h = cfg.dt / 2
    if ens == "NVE":
        U = ex("H1", h) @ ex("H2", cfg.dt) @ ex("H1", h)
    else:
        U = (ex("H1", h) @ ex("H2", h) @ ex("H3", h) @ ex("H4", cfg.dt) @ ex("H3", h)
             @ ex("H2", h) @ ex("H1", h))
    st = _random_state(g, rng)
    got = step(st, mod, cfg).amp.ravel()
    assert np.max(np.abs(got - U @ st.amp.ravel())) < 1e-12
    prop = Propagator(g, mod, cfg)
    np.testing.assert_allclose(prop.evolve(st, 5).amp.ravel(),
                               np.linalg.matrix_power(U, 5) @ st.amp.ravel(), atol=1e-12)
    assert np.max(np.abs(prop.evolve(prop.evolve(st, 7), 7, dt=-cfg.dt).amp - st.amp)) < 1e-10
    np.testing.assert_allclose(prop.step(st, dt=0.0).amp, st.amp, atol=1e-14)


def test_generators_hermitian_and_real_spectrum():
    mod = cosine_1p()
    g = make_grid(1, 3, 3, 6.0)
    H = assemble_dense_generator(g, mod, StepConfig())
    assert np.max(np.abs(H - H.conj().T)) < 1e-12
    gx = make_grid(1, 2, 3, 6.0, 3, 4.0)
    Hx = assemble_dense_generator(gx, mod, NVT)
    assert np.max(np.abs(Hx - Hx.conj().T)) < 1e-10
    assert np.max(np.abs(np.linalg.eigvals(Hx).imag)) < 1e-8
    with pytest.raises(ValueError):
        assemble_dense_generator(make_grid(2, 3, 4, 6.0), coupled_cosine_2p(), StepConfig())


def test_step_local_error_is_third_order(rng):
    mod = cosine_1p()
    g = make_grid(1, 3, 3, 6.0)
    H = assemble_dense_generator(g, mod, StepConfig())
    st = _random_state(g, rng)
    errs = []
    for dt in (0.02, 0.01):
        exact = scipy.linalg.expm(-1j * dt * H) @ st.amp.ravel()
        errs.append(np.linalg.norm(step(st, mod, StepConfig(dt=dt)).amp.ravel() - exact))
    assert 6.0 < errs[0] / errs[1] < 10.0


def test_ensemble_grid_mismatch():
    with pytest.raises(ValueError):
        Propagator(make_grid(1, 3, 3, 6.0), cosine_1p(), NVT)
    with pytest.raises(ValueError):
        Propagator(make_grid(1, 3, 3, 6.0, 2, 3.0), cosine_1p(), StepConfig())
    with pytest.raises(ValueError):
        StepConfig(ensemble="NPT")


def test_norm_over_many_steps(rng):
    g = make_grid(1, 4, 4, 6.0, 3, 4.0)
    prop = Propagator(g, cosine_1p(), NVT)
    st = _random_state(g, rng)
    out = prop.evolve(st, 1000)
    assert abs(out.norm() - 1.0) < 1e-10
    for op in (prop.drift, prop.kick, prop.dilation, prop.thermostat):
        a = st
        for _ in range(50):
            a = op(a, 0.1)
        assert abs(a.norm() - 1.0) < 1e-12


def test_two_particle_reference_propagation(rng):
    """Fast executor vs a dense product of block exponentials, particle-1 marginal at t = 2.56."""
    mod = coupled_cosine_2p()
    g = make_grid(2, 2, 2, 6.0)
    cfg = StepConfig(dt=0.02)
    psi = encode_canonical(g, mod, 1.0)
    H1 = assemble_dense_generator(g, mod, cfg, ("H1",))
    H2 = assemble_dense_generator(g, mod, cfg, ("H2",))
    U = scipy.linalg.expm(-0.5j * cfg.dt * H1) @ scipy.linalg.expm(-1j * cfg.dt * H2) \
        @ scipy.linalg.expm(-0.5j * cfg.dt * H1)
    ref = np.linalg.matrix_power(U, 128) @ psi.amp.ravel()
    out = Propagator(g, mod, cfg).evolve(psi, 128)
    a = reduced_distribution(out, ["q1", "p1"])
    b = reduced_distribution(KvnState(g, ref.reshape(g.shape)), ["q1", "p1"])
    assert np.max(np.abs(a - b)) < 1e-12


def test_correlation_matches_naive_loop(rng):
    mod = coupled_cosine_2p()
    g = make_grid(2, 2, 3, 6.0)
    prop = Propagator(g, mod, StepConfig())
    st = _random_state(g, rng)
    fast = prop.correlation(st, 20)
    a = st
    naive = [st.inner(st)]
    for _ in range(20):
        a = prop.step(a)
        naive.append(st.inner(a))
    assert np.max(np.abs(fast - np.array(naive))) < 1e-12


def test_batched_fields_propagate_independently(rng):
    g = make_grid(1, 3, 3, 6.0, 2, 3.0)
    prop = Propagator(g, cosine_1p(), NVT)
    batch = rng.normal(size=(3,) + g.shape) + 0j
    out = prop.evolve(batch, 4)
    for b in range(3):
        np.testing.assert_allclose(out[b], prop.evolve(batch[b], 4), atol=1e-13)


def test_drift_half_wrapper():
    g = make_grid(1, 3, 3, 6.0)
    psi = encode_canonical(g, cosine_1p(), 1.0)
    cfg = StepConfig(dt=0.1)
    np.testing.assert_allclose(apply_drift_half(psi, cosine_1p(), cfg).amp,
                               Propagator(g, cosine_1p(), cfg).drift(psi, 0.05).amp, atol=0)
