import math

import numpy as np
import pytest

from kvnmd.classical import (MdConfig, MdState, energy, gk_running, kinetic_temperature,
                             langevin_sample, nose_hoover_step, position_verlet_step, run_trajectory,
                             vacf_md, verlet_step)
from kvnmd.engine import StepConfig
from kvnmd.potentials import PotentialModel, coupled_cosine_2p, cosine_1p, free
from kvnmd.readout import CorrelationSeries


def test_verlet_free_particle():
    s = verlet_step(MdState([0.3], [1.5]), free(1), 0.1)
    assert s.q[0] == pytest.approx(0.45)
    assert s.p[0] == 1.5
    assert s.t == pytest.approx(0.1)


def test_verlet_step_halving_is_third_order():
    mod = cosine_1p(2.0)
    s0 = MdState([0.4], [0.7])
    diffs = []
    for dt in (0.1, 0.05):
        one = verlet_step(s0, mod, dt)
        two = verlet_step(verlet_step(s0, mod, dt / 2), mod, dt / 2)
        diffs.append(np.hypot(one.q - two.q, one.p - two.p)[0])
    assert 6.5 < diffs[0] / diffs[1] < 9.5


def test_position_verlet_agrees_to_second_order():
    mod = cosine_1p()
    a = position_verlet_step(MdState([0.4], [0.7]), mod, 1e-3)
    b = verlet_step(MdState([0.4], [0.7]), mod, 1e-3)
    assert abs(a.q[0] - b.q[0]) < 1e-8 and abs(a.p[0] - b.p[0]) < 1e-8


def test_energy_conservation_long_run():
    # Verlet energy error oscillates at O(dt^2) around a shadow value; the
    # secular part is what must stay small, so compare window averages
    mod = coupled_cosine_2p()
    s0 = MdState([0.3, 2.0], [1.1, -0.4])
    _, _, q, p, _ = run_trajectory(s0, mod, None, 0.01, 100_000, record_every=10)
    E = np.array([energy(mod, MdState(qi, pi)) for qi, pi in zip(q, p)])
    e0 = energy(mod, s0)
    assert abs(E[-1000:].mean() - E[:1000].mean()) / e0 < 1e-4
    assert np.max(np.abs(E - e0)) / e0 < 2e-3


def test_nose_hoover_linearized_and_reversible():
    s = nose_hoover_step(MdState([0.0], [2.0], 0.0), free(1), MdConfig(), 1e-3)
    # dxi/dt = (p^2/m - N_f T0)/Q = 3; friction stays O(dt)
    assert s.xi == pytest.approx(3e-3, rel=1e-2)
    assert s.p[0] == pytest.approx(2.0, abs=1e-5)
    mod = coupled_cosine_2p()
    s0 = MdState([0.3, 2.0], [1.1, -0.4], 0.2)
    s = s0
    for _ in range(200):
        s = nose_hoover_step(s, mod, MdConfig(), 0.01)
    for _ in range(200):
        s = nose_hoover_step(s, mod, MdConfig(), -0.01)
    assert np.max(np.abs(s.q - s0.q)) < 1e-9 and np.max(np.abs(s.p - s0.p)) < 1e-9
    assert abs(s.xi - s0.xi) < 1e-9


def test_nose_hoover_equipartition():
    mod = coupled_cosine_2p()
    _, _, _, p, _ = run_trajectory(MdState([0.3, 2.0], [1.1, -0.4]), mod, StepConfig(ensemble="NVT"),
                                   0.01, 1_000_000, scheme="nose_hoover", record_every=10)
    assert kinetic_temperature(p, mod.masses) == pytest.approx(1.0, abs=0.05)


def test_langevin_free_variance_and_determinism():
    ens = langevin_sample(free(1), 1.0, 10_000, seed=7, burn_in=2000, thin=200)
    assert np.var(ens.p) == pytest.approx(1.0, rel=0.05)
    again = langevin_sample(free(1), 1.0, 10_000, seed=7, burn_in=2000, thin=200)
    np.testing.assert_array_equal(ens.p, again.p)
    assert np.all((ens.q >= 0) & (ens.q < 2 * math.pi))
    other = langevin_sample(free(1), 1.0, 100, seed=8, burn_in=200, thin=50)
    assert not np.allclose(other.p, ens.p[:100])


def test_langevin_potential_average_matches_quadrature():
    mod = coupled_cosine_2p()
    ens = langevin_sample(mod, 1.0, 4000, seed=3)
    V = mod.energy(ens.q[:, 0], ens.q[:, 1])
    g = np.arange(256) * 2 * math.pi / 256
    Q1, Q2 = np.meshgrid(g, g, indexing="ij")
    Vg = mod.energy(Q1, Q2)
    w = np.exp(-(Vg - Vg.min()))
    ref = float(np.sum(w * Vg) / w.sum())
    assert abs(V.mean() - ref) < 5 * V.std() / math.sqrt(len(V))
    assert kinetic_temperature(ens.p, mod.masses) == pytest.approx(1.0, abs=3 * math.sqrt(2) / math.sqrt(4000))


def test_langevin_draws_xi():
    ens = langevin_sample(cosine_1p(), 1.0, 5000, seed=1, burn_in=100, thin=10, Q=4.0)
    assert np.var(ens.xi) == pytest.approx(0.25, rel=0.06)


def test_vacf_zero_time_and_free_particle():
    mod = coupled_cosine_2p()
    ens = langevin_sample(mod, 1.0, 64, seed=2, burn_in=500, thin=100)
    s = vacf_md(ens, mod, StepConfig(), 0.01, 200, dof_index=0)
    assert s.C0 == pytest.approx(np.mean(ens.p[:, 0] ** 2), rel=1e-12)
    assert s.c[0] == 1.0
    fr = langevin_sample(free(1), 1.0, 16, seed=2, burn_in=10, thin=10)
    c = vacf_md(fr, free(1), StepConfig(), 0.05, 100)
    np.testing.assert_allclose(c.c, 1.0, atol=1e-13)
    cm = vacf_md(fr, free(1), StepConfig(), 0.05, 100, multi_origin=True, run_steps=300)
    np.testing.assert_allclose(cm.c, 1.0, atol=1e-12)


def test_vacf_multi_origin_consistent_with_single_origin():
    mod = coupled_cosine_2p()
    ens = langevin_sample(mod, 1.0, 400, seed=4)
    a = vacf_md(ens, mod, StepConfig(), 0.01, 300, stride=3)
    b = vacf_md(ens, mod, StepConfig(), 0.01, 300, stride=3, multi_origin=True, run_steps=3000)
    assert a.c.size == b.c.size == 101
    assert np.max(np.abs(a.c * a.C0 - b.c * b.C0)) < 0.1


def test_vacf_rejects_bad_arguments():
    mod = cosine_1p()
    ens = langevin_sample(mod, 1.0, 4, seed=0, burn_in=10, thin=10)
    with pytest.raises(ValueError):
        vacf_md(ens, mod, None, 0.01, 10, stride=3)
    with pytest.raises(ValueError):
        vacf_md(ens, mod, None, 0.01, 10, dof_index=3)


def test_gk_running_analytic_cases():
    r = gk_running(CorrelationSeries(0.1, np.ones(11), 2.0))
    np.testing.assert_allclose(r.D_of_t, 2.0 * r.times, atol=1e-14)
    assert r.D_of_t[0] == 0.0
    t = np.arange(0, 20.0 + 1e-9, 0.01)
    r = gk_running(CorrelationSeries(0.01, np.exp(-t), 1.0))
    assert r.window(19.0, 20.0)[0] == pytest.approx(1.0, abs=1e-3)
    a, b = np.cos(t), np.exp(-t)
    lin = gk_running(CorrelationSeries(0.01, 2 * a + 3 * b, 1.0)).D_of_t
    ref = 2 * gk_running(CorrelationSeries(0.01, a, 1.0)).D_of_t + 3 * gk_running(CorrelationSeries(0.01, b, 1.0)).D_of_t
    np.testing.assert_allclose(lin, ref, atol=1e-12)
    with pytest.raises(ValueError):
        r.window(50, 60)


def test_tabulated_model_uses_numpy_path():
    mod = PotentialModel("tabulated", masses=(1.0,), energy_fn=lambda q: 0.5 * q ** 2,
                         force_fn=lambda q: [-q])
    final, times, q, p, _ = run_trajectory(MdState([1.0], [0.0]), mod, None, 0.01, 314)
    assert final.q[0] == pytest.approx(-1.0, abs=1e-3)
