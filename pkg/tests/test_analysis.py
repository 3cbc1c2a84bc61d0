import math
import warnings

import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st

from phasesketch import analysis as A
from phasesketch.flo_sim import prepare_trivial_gs
from phasesketch.model import ModelError, build_model
from phasesketch.qudit_sim import SpinCircuit, StateVector, prepare_initial
from test_qudit_sim import string_order_mps


def product_state(local, n):
    psi = local
    for _ in range(n - 1):
        psi = np.kron(psi, local)
    return StateVector(psi.astype(complex), len(local), n)


def singlet_pair():
    # (|+-> - |00> + |-+>)/sqrt(3) in the (+1, 0, -1) basis
    s = np.zeros(9)
    s[0 * 3 + 2], s[1 * 3 + 1], s[2 * 3 + 0] = 1, -1, 1
    return s / math.sqrt(3)


def test_magnetization_all_down():
    m = build_model("tfim-1d", 5)
    assert A.order_parameter(prepare_initial(m), "m_z", m) == pytest.approx(-1.0)


def test_spin_correlation_polarized():
    # standard spin-1 operators give S.S = 1 for two fully polarised neighbours
    m = build_model("bbc", 5)
    up = product_state(np.array([1.0, 0, 0]), 5)
    assert A.order_parameter(up, "spin_corr", m) == pytest.approx(1.0)


def test_dimerization_of_singlet_product():
    # singlets on bonds (1,2), (3,4), (5,6): bond values -2, 0, -2, 0, -2
    psi = np.kron(np.kron(singlet_pair(), singlet_pair()), singlet_pair())
    st_ = StateVector(psi.astype(complex), 3, 6)
    assert np.allclose(A.bond_correlations(st_), [-2, 0, -2, 0, -2], atol=1e-12)
    assert A.dimerization(st_) == pytest.approx(-2.0)


def test_string_order_aklt_eight_sites():
    from phasesketch.qudit_sim import boundary_spinor

    m = build_model("bbc", 8)
    bnd = [2.2, -0.3, 0.4, 1.9]
    st_ = prepare_initial(m, bnd)
    ref = string_order_mps(8, boundary_spinor(*bnd[:2]), boundary_spinor(*bnd[2:]), 2, 7)
    assert A.order_parameter(st_, "string", m) == pytest.approx(ref, abs=1e-10)


def test_string_order_endpoint_validation():
    st_ = product_state(np.array([0, 1.0, 0]), 4)
    with pytest.raises(ValueError):
        A.string_order(st_, 3, 3)


def test_incompatible_kind():
    m = build_model("tfim-1d", 4)
    with pytest.raises(ModelError):
        A.order_parameter(prepare_initial(m), "coop", m)
    ssh = build_model("ssh-2d", 4)
    assert -1 <= A.order_parameter(prepare_trivial_gs(ssh), "coop", ssh) <= 1


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 10**6))
def test_bbc_order_parameter_ranges(seed):
    rng = np.random.default_rng(seed)
    m = build_model("bbc", 5)
    sim = SpinCircuit(m)
    st_ = sim.run(rng.uniform(-3, 3, sim.n_params(2)), 2)
    assert abs(A.order_parameter(st_, "dimer", m)) <= 4
    assert abs(A.order_parameter(st_, "string", m)) <= 1
    assert abs(A.order_parameter(st_, "spin_corr", m)) <= 4


def test_derivative_examples():
    t = A.energy_derivative_table({(0.5, 1): -1.0, (0.5, 2): -1.5})
    assert t.values[0, 0] == pytest.approx(-0.5)
    t = A.energy_derivative_table({(0.1, 1): 0.0, (0.2, 1): 0.0, (0.1, 2): -0.5, (0.2, 2): -0.25}, normalize=True)
    assert np.allclose(t.values[0], [-1.0, -0.5])
    flat = A.energy_derivative_table([(g, p, -3.0) for g in (0.1, 0.2) for p in (1, 2, 3)], normalize=True)
    assert not flat.values.any()


def test_uneven_depth_grid():
    t = A.energy_derivative_table({(1.0, 1): -1.0, (1.0, 3): -2.0})
    assert t.values[0, 0] == pytest.approx(-0.5)
    assert list(t.row_depths) == [3]


def test_holes_reported():
    cells = {(0.1, 1): -1.0, (0.2, 1): -1.0, (0.1, 2): -2.0}
    with pytest.raises(A.GridError) as err:
        A.energy_derivative_table(cells)
    assert err.value.holes == [(0.2, 2)]
    t = A.energy_derivative_table(cells, allow_holes=True)
    assert np.isnan(t.values[0, 1]) and t.holes == [(0.2, 2)]


def _random_table(seed):
    rng = np.random.default_rng(seed)
    gs, ps = [0.1, 0.2, 0.3, 0.4], [1, 2, 3, 5]
    return {(g, p): float(rng.normal()) for g in gs for p in ps}


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10**6), s=st.floats(0.01, 100))
def test_normalization_and_scaling(seed, s):
    cells = _random_table(seed)
    t = A.energy_derivative_table(cells)
    n = A.normalize_table(t)
    assert np.allclose(A.normalize_table(n).values, n.values)
    assert np.allclose(np.abs(n.values).max(axis=1), 1.0)
    scaled = A.energy_derivative_table({k: s * v for k, v in cells.items()})
    assert np.allclose(scaled.values, s * t.values)
    assert A.locate_transition(scaled) == A.locate_transition(t)


def test_g_derivative_examples():
    g = np.linspace(0, 1, 6)
    assert np.allclose(A.g_derivative(3 * g + 1, g), 3)
    assert np.allclose(A.g_derivative(np.full(6, 2.0), g), 0)
    step = np.where(g > 0.5, 1.0, 0.0)
    d = A.g_derivative(step, g)
    assert np.abs(d).max() == pytest.approx(1.0 / (2 * 0.2))
    with pytest.raises(ValueError):
        A.g_derivative([1, 2], [0, 1])


def test_locate_examples():
    g = [0.1, 0.2, 0.3, 0.4, 0.5]
    assert A.locate_transition([0, -1, -2, -5, -3], "argmin", g) == 0.4
    assert A.locate_transition([1, 1, 1, 1, 1], "argmin", g) == 0.1
    assert A.locate_transition([1, -4, 3, 2, 0], "argmax_abs", g) == 0.2


def test_median_guard_removes_spike():
    g = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7]
    row = [0.0, -9.0, 0.0, -1.0, -3.0, -2.0, -1.0]
    assert A.locate_transition(row, "argmin", g) == 0.2
    assert A.locate_transition(row, "argmin", g, median_guard=True) == 0.5


def test_exp_fit_recovers_parameters():
    p = np.arange(1, 11)
    fit = A.exp_fit(2 * np.exp(-0.5 * p) - 3)
    assert fit.a == pytest.approx(2, abs=1e-6)
    assert fit.gamma == pytest.approx(0.5, abs=1e-6)
    assert fit.e0_fit == pytest.approx(-3, abs=1e-6)
    assert 0 <= fit.residual < 1e-8


def test_exp_fit_flat_and_short():
    assert A.exp_fit([-4.0] * 6) == A.ExpFit(0.0, 0.0, -4.0, 0.0)
    with pytest.raises(ValueError):
        A.exp_fit([1, 0, -1])


def test_exp_fit_warns_on_increase():
    with pytest.warns(RuntimeWarning):
        A.exp_fit([-1.0, -2.0, -1.5, -2.5, -2.6])


@settings(max_examples=25, deadline=None)
@given(a=st.floats(0.1, 5), gamma=st.floats(0.05, 3), e0=st.floats(-20, 20))
def test_exp_fit_model_class_residual(a, gamma, e0):
    p = np.arange(1, 13)
    e = a * np.exp(-gamma * p) + e0
    assume(np.ptp(e) > 1e-6)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        fit = A.exp_fit(e, p)
    assert fit.residual < 1e-8
