import numpy as np
import pytest

from sindy_forge import benchmarks as B
from sindy_forge.differentiation import DiffSpec
from sindy_forge.errors import DataError, ParameterError
from sindy_forge.features import polynomial_library, sqrt_augmented_library
from sindy_forge.sindy import SimOptions, SparseModel, rhs, simulate
from sindy_forge.stls import StlsSpec
from sindy_forge.strategies import (
    HiddenStateGuess,
    StrategyResult,
    boucwen_hidden_fit,
    boucwen_residual,
    estimate_initial_hidden,
    initial_state,
    naive_fit,
    second_order_augment,
    second_order_fit,
    simulate_output,
    tanks_hidden_fit,
    unsaturated_rows,
    upper_tank_state,
)
from sindy_forge.timeseries import SplitSpec, split

from conftest import make_traj

BW = B.BoucWenParams()
BW_TRUE = HiddenStateGuess({"m_L": BW.m_L, "c_L": BW.c_L, "k_L": BW.k_L})
TK = B.TanksParams()


def _boucwen_record(dt=1 / 3000, f_hi=5.0, seconds=8):
    fs = int(round(1 / dt))
    exc = B.ExcitationSpec("multisine", 150.0, (seconds + 1) * fs * dt, 0.5, f_hi, seed=3)
    return B.simulate_boucwen(BW, exc, dt).segment(fs, (seconds + 1) * fs)


@pytest.fixture(scope="module")
def boucwen_split():
    tr, va, _ = split(_boucwen_record(), SplitSpec(18000, 6000, 0))
    return tr, va


@pytest.fixture(scope="module")
def tanks_record():
    u = B.excitation(B.ExcitationSpec("filtered-random", 1.0, 4 * 3000, 0.0, 0.008, seed=2, offset=2.5, clip=(0, 10)), 4.0)
    return B.simulate_tanks(TK, u, x0=(2.0, 1.0))


def _tanks_lib():
    return sqrt_augmented_library(polynomial_library(2, 1, 1, ("y", "x1", "u")), ["y", "x1"], (0.0, 10.0))


def test_second_order_augment_on_square():
    dt = 0.01
    t = np.arange(100) * dt
    aug = second_order_augment(make_traj(t**2, np.zeros((100, 1)), dt=dt, state_names=("y",)))
    assert aug.state_names == ("y", "y_dot")
    np.testing.assert_allclose(aug.states[:, 1], 2 * t, atol=1e-10)
    np.testing.assert_allclose(aug.derivatives[:, 1], 2.0, atol=1e-8)


def test_second_order_fit_fixes_kinematic_row():
    dt = 0.01
    t = np.arange(600) * dt
    u = np.sin(2 * t) + 0.3 * np.sin(7.1 * t)
    truth_lib = polynomial_library(2, 1, 1, ("y", "y_dot", "u"))
    theta = np.zeros((len(truth_lib), 2))
    theta[truth_lib.index("y_dot"), 0] = 1.0
    theta[[truth_lib.index("y"), truth_lib.index("y_dot"), truth_lib.index("u")], 1] = (-4.0, -0.8, 2.0)
    data = simulate(SparseModel(truth_lib, theta, ("y", "y_dot"), ("u",)), [0.0, 0.0], u, SimOptions(substeps=20), dt=dt)
    obs = make_traj(data.states[:, 0], u[:, None], dt=dt, state_names=("y",), input_names=("u",))
    res = second_order_fit(obs, truth_lib, StlsSpec(0.05), DiffSpec(), valid=obs)
    assert res.model.fixed == frozenset({0})
    assert res.model.terms(0) == [("y_dot", 1.0)]
    got = dict(res.model.terms(1))
    assert got["y"] == pytest.approx(-4.0, rel=1e-2)
    assert got["u"] == pytest.approx(2.0, rel=1e-2)
    assert res.validation_rmse < 1e-2 * np.std(obs.states[:, 0])


def test_unsaturated_rows_margin():
    y = np.array([0.0, 0.0, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 10.0, 10.0])
    keep = unsaturated_rows(y, 0.0, 10.0, tol=0.01, margin=1)
    assert keep.tolist() == [False, False, False, True, True, True, True, False, False, False]


def test_boucwen_ideal_recovers_zdot(boucwen_split):
    tr, va = boucwen_split
    res = boucwen_hidden_fit(tr, BW_TRUE, StlsSpec(0.03), DiffSpec(), valid=va)
    got = res.diagnostics["zdot_terms"]
    for name, value in BW.zdot_terms().items():
        assert got[name] == pytest.approx(value, rel=0.02)
    assert set(got) <= {"ydot", "z*|ydot|", "|z|*ydot", "|z|*|ydot|"}
    assert res.model.fixed == frozenset({0, 1})
    # mechanical rows are the guess, bit for bit
    th = res.model.theta
    assert th[res.model.library.index("y_dot"), 0] == 1.0
    assert th[:4, 1].tolist() == [-BW.k_L / BW.m_L, -BW.c_L / BW.m_L, -1.0 / BW.m_L, 1.0 / BW.m_L]


def test_boucwen_wrong_mass_is_worse(boucwen_split):
    tr, va = boucwen_split
    good = boucwen_hidden_fit(tr, BW_TRUE, StlsSpec(0.03), DiffSpec(), valid=va)
    bad = boucwen_hidden_fit(tr, HiddenStateGuess({**BW_TRUE.params, "m_L": 2 * BW.m_L}), StlsSpec(0.03), DiffSpec(), valid=va)
    assert bad.validation_rmse > good.validation_rmse


def test_boucwen_residual_error_is_stencil_error():
    errs = []
    for dt in (1 / 1500, 1 / 3000):
        rec = _boucwen_record(dt, seconds=2)
        yd, ydd, z = boucwen_residual(rec, BW_TRUE)
        err = np.abs(z - rec.hidden["z"])
        stencil = BW.m_L * np.abs(ydd - rec.hidden["yddot"]) + BW.c_L * np.abs(yd - rec.hidden["ydot"])
        assert np.all(err <= stencil + 1e-9 * np.abs(rec.hidden["z"]).max())
        errs.append(err[4:-4].max())
    # zero-order-hold inputs make yddot jump at every sample: first order, not second
    assert errs[0] / errs[1] >= 1.8
    assert errs[1] < 0.01 * np.abs(rec.hidden["z"]).max()


def test_tanks_hidden_recovers_lower_tank(tanks_record):
    g = HiddenStateGuess({"k1": TK.k1, "k2": TK.k2}, x1_0=2.0)
    res = tanks_hidden_fit(tanks_record, g, _tanks_lib(), StlsSpec(1e-3), DiffSpec())
    terms = dict(res.model.terms(0))
    assert set(terms) == {"sqrt(y)", "sqrt(x1)"}
    assert terms["sqrt(x1)"] == pytest.approx(TK.k3, rel=0.02)
    assert terms["sqrt(y)"] == pytest.approx(-TK.k4, rel=0.02)
    assert res.model.coefficient(1, "sqrt(x1)") == -TK.k1
    assert res.model.coefficient(1, "u") == TK.k2


def test_tanks_hidden_state_ignores_output(tanks_record):
    g = HiddenStateGuess({"k1": TK.k1, "k2": TK.k2}, x1_0=2.0)
    u = tanks_record.inputs[:, 0]
    a = upper_tank_state(g, u, 4.0, 10.0)
    np.testing.assert_array_equal(a, upper_tank_state(g, u, 4.0, 10.0))
    np.testing.assert_allclose(a, tanks_record.hidden["x1"], rtol=1e-12)
    perm = tanks_record.replace(states=np.random.default_rng(0).permutation(tanks_record.states))
    r1 = tanks_hidden_fit(tanks_record, g, _tanks_lib(), StlsSpec(1e-3))
    r2 = tanks_hidden_fit(perm, g, _tanks_lib(), StlsSpec(1e-3))
    np.testing.assert_array_equal(r1.model.theta[:, 1], r2.model.theta[:, 1])


def test_tanks_no_excitation_degenerates():
    flat = make_traj(np.zeros(200), np.zeros((200, 1)), dt=4.0, state_names=("y",), input_names=("u",))
    res = tanks_hidden_fit(flat, HiddenStateGuess({"k1": 0.05, "k2": 0.04}, x1_0=0.0), _tanks_lib(), StlsSpec(1e-3))
    assert not res.model.theta[:, 0].any()


def test_tanks_guess_validation():
    with pytest.raises(ParameterError):
        HiddenStateGuess({"k1": -1.0, "k2": 1.0})
    with pytest.raises(ParameterError):
        HiddenStateGuess({"k1": 1.0}, bounds={"k1": (2.0, 1.0)})
    with pytest.raises(ParameterError):
        upper_tank_state(HiddenStateGuess({"k1": 1.0, "k2": 1.0}, x1_0=11.0), np.zeros(5), 1.0, 10.0)


def _exact_tanks_model():
    lib = sqrt_augmented_library(polynomial_library(2, 1, 1, ("y", "x1", "u")), ["y", "x1"], (0.0, 10.0))
    theta = np.zeros((len(lib), 2))
    theta[lib.index("sqrt(x1)"), 0] = TK.k3
    theta[lib.index("sqrt(y)"), 0] = -TK.k4
    theta[lib.index("sqrt(x1)"), 1] = -TK.k1
    theta[lib.index("u"), 1] = TK.k2
    return SparseModel(lib, theta, ("y", "x1"), ("u",))


@pytest.mark.parametrize("x1", [0.7, 3.3, 5.0, 8.9])
def test_initial_hidden_within_one_cell(x1):
    m = _exact_tanks_model()
    y0, u0 = 2.0, 3.0
    yd0 = rhs(m, [y0, x1], [u0])[0]
    grid = (0.0, 10.0, 200)
    assert abs(estimate_initial_hidden(m, y0, yd0, [u0], grid) - x1) <= 10.0 / 199


def test_initial_hidden_ties_and_two_points():
    m = _exact_tanks_model()
    zero = m.with_theta(np.zeros_like(m.theta))
    assert estimate_initial_hidden(zero, 1.0, 0.3, [1.0], (2.0, 9.0, 50)) == 2.0
    yd0 = rhs(m, [2.0, 4.0], [3.0])[0]
    assert estimate_initial_hidden(m, 2.0, yd0, [3.0], (3.5, 6.0, 2)) == 3.5
    assert estimate_initial_hidden(m, 2.0, yd0, [3.0], (2.0, 4.6, 2)) == 4.6
    with pytest.raises(ParameterError):
        estimate_initial_hidden(m, 2.0, yd0, [3.0], (-1.0, 4.0, 10))


@pytest.mark.parametrize("seed", range(10))
def test_initial_hidden_grid_refinement_is_monotone(seed):
    rng = np.random.default_rng(seed)
    m = _exact_tanks_model()
    y0, u0, yd0 = rng.uniform(0, 10), rng.uniform(0, 10), rng.normal(0, 0.1)

    def objective(steps):
        x = estimate_initial_hidden(m, y0, yd0, [u0], (0.0, 10.0, steps))
        return (yd0 - rhs(m, [y0, x], [u0])[0]) ** 2

    steps = 5
    for _ in range(6):
        # nested grids: the refined grid contains every old point
        assert objective(2 * steps - 1) <= objective(steps)
        steps = 2 * steps - 1


def test_naive_fit_and_initial_state():
    dt = 0.01
    t = np.arange(400) * dt
    u = np.sin(3 * t)
    lib = polynomial_library(1, 1, 1, ("y", "u"))
    theta = np.zeros((3, 1))
    theta[1, 0], theta[2, 0] = -2.0, 1.0
    data = simulate(SparseModel(lib, theta, ("y",), ("u",)), [0.5], u, SimOptions(substeps=20), dt=dt)
    res = naive_fit(data, lib, StlsSpec(0.1), DiffSpec(), valid=data)
    assert res.kind == "naive" and res.guess is None
    np.testing.assert_array_equal(initial_state(res, data), [0.5])
    assert res.validation_rmse < 5e-3
    np.testing.assert_allclose(simulate_output(res, data), data.states[:, 0], atol=1e-2)


def test_strategy_result_rejects_negative_rmse():
    with pytest.raises(ParameterError):
        StrategyResult("naive", None, None, -1.0, {})


def test_single_output_required():
    two = make_traj(np.zeros((10, 2)), np.zeros((10, 1)))
    with pytest.raises(DataError):
        boucwen_residual(two, BW_TRUE)
