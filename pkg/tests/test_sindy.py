import math

import numpy as np
import pytest

from sindy_forge import kernels
from sindy_forge.errors import DivergenceError, ParameterError
from sindy_forge.features import custom_term, polynomial_library, sqrt_augmented_library
from sindy_forge.sindy import SimOptions, SparseModel, fit, model_from_dict, model_to_dict, parse_equations, render, rhs, simulate
from sindy_forge.stls import StlsSpec

from conftest import make_traj


def _model(coefs, n=1, m=1, degree=2, names=("y", "u")):
    lib = polynomial_library(n, m, degree, names)
    theta = np.zeros((len(lib), n))
    for (j, name), c in coefs.items():
        theta[lib.index(name), j] = c
    return SparseModel(lib, theta, names[:n], names[n:])


def _decay(x0=1.0, T=101, substeps=10, backend=None, rate=-1.0):
    m = _model({(0, "y"): rate}, m=0, names=("y",))
    return simulate(m, [x0], np.zeros((T, 0)), SimOptions(substeps=substeps, backend=backend), dt=0.01)


def test_exponential_decay(backend):
    assert _decay(backend=backend).states[-1, 0] == pytest.approx(math.exp(-1), abs=1e-9)


def test_rk4_order_under_substep_quadrupling(backend):
    m = _model({(0, "y"): -1.0}, m=0, names=("y",))
    err = lambda s: abs(simulate(m, [1.0], np.zeros((11, 0)), SimOptions(substeps=s, backend=backend), dt=0.1).states[-1, 0] - math.exp(-1))
    ratio = err(1) / err(4)
    assert 200 <= ratio <= 300


def test_zero_model_is_constant():
    m = _model({})
    tr = simulate(m, [2.5], np.random.default_rng(0).standard_normal((30, 1)), dt=0.1)
    assert np.all(tr.states == 2.5)


def test_divergence_reports_index(backend):
    with pytest.raises(DivergenceError) as exc:
        _decay(T=10_000, rate=200.0, backend=backend)
    assert exc.value.index > 0


def test_fit_recovers_first_order_system():
    dt, T = 0.01, 500
    u = np.sin(np.arange(T) * dt * 3) + 0.5 * np.cos(np.arange(T) * dt * 7.3)
    truth = _model({(0, "y"): -2.0, (0, "u"): 1.0})
    data = simulate(truth, [0.3], u, SimOptions(substeps=50), dt=dt)
    # derivatives from the model itself isolate regression from stencil error
    exact = data.replace(derivatives=rhs(truth, data.states, data.inputs))
    m = fit(exact, truth.library, StlsSpec(0.1))
    np.testing.assert_allclose(m.theta, truth.theta, rtol=0, atol=1e-6)
    assert not fit(exact, truth.library, StlsSpec(1e6)).theta.any()


def test_fit_with_rows_and_normalize():
    rng = np.random.default_rng(3)
    x, u = rng.standard_normal(100) * 100, rng.standard_normal(100)
    tr = make_traj(x, u[:, None], derivatives=(-0.5 * x + 2 * u)[:, None], state_names=("y",), input_names=("u",))
    lib = polynomial_library(1, 1, 1, ["y", "u"])
    # normalised: u carries ~4% of the target RMS, so it survives 0.01 only
    assert fit(tr, lib, StlsSpec(0.1), normalize=True).coefficient(0, "u") == 0.0
    m = fit(tr, lib, StlsSpec(0.01), normalize=True)
    np.testing.assert_allclose(m.theta[:, 0], [0, -0.5, 2.0], atol=1e-10)
    m = fit(tr, lib, StlsSpec(0.1), rows=np.arange(100) < 50)
    np.testing.assert_allclose(m.theta[:, 0], [0, -0.5, 2.0], atol=1e-10)


def test_rhs_examples(rng):
    assert not rhs(_model({}), [1.0], [2.0]).any()
    assert rhs(_model({(0, "y"): 2.0}), [3.0], [0.0])[0] == 6.0
    m = _model({(0, n): c for n, c in zip(["1", "y", "u", "y^2", "y*u", "u^2"], rng.standard_normal(6))})
    x, u = 0.7, -1.3
    expected = sum(m.coefficient(0, n) * v for n, v in zip(m.library.names, [1, x, u, x * x, x * u, u * u]))
    assert rhs(m, [x], [u])[0] == pytest.approx(expected, abs=1e-14)


def test_rhs_linear_in_theta(rng):
    lib = polynomial_library(2, 1, 2)
    t1, t2 = rng.standard_normal((len(lib), 2)), rng.standard_normal((len(lib), 2))
    X, U = rng.standard_normal((20, 2)), rng.standard_normal((20, 1))
    mk = lambda t: SparseModel(lib, t, ("x0", "x1"), ("u0",))
    np.testing.assert_allclose(rhs(mk(t1 + t2), X, U), rhs(mk(t1), X, U) + rhs(mk(t2), X, U), rtol=0, atol=1e-12)


def test_render_examples():
    assert render(_model({(0, "y"): -2.0, (0, "u"): 1.0})) == "dy/dt = -2.000*y + 1.000*u"
    assert render(_model({})) == "dy/dt = 0"


def test_render_parse_round_trip(rng):
    lib = sqrt_augmented_library(polynomial_library(2, 1, 2, ["y", "x1", "u"]), ["y"], (0, 10))
    theta = rng.standard_normal((len(lib), 2)) * 10.0 ** rng.integers(-4, 4, (len(lib), 2))
    theta[rng.random(theta.shape) < 0.3] = 0.0
    m = SparseModel(lib, theta, ("y", "x1"), ("u",))
    back = parse_equations(render(m, 17), lib, m.state_names)
    # fixed-point text: 17 decimals bound the absolute error
    np.testing.assert_allclose(back, theta, rtol=0, atol=1e-17)


def test_model_document_round_trip():
    m = _model({(0, "y"): -1.0 / 3.0, (0, "y*u"): 1e-7})
    back = model_from_dict(model_to_dict(m))
    np.testing.assert_array_equal(back.theta, m.theta)
    assert back.library.names == m.library.names


def test_clip_and_stops(backend):
    # constant push into an upper stop: position clips, velocity is zeroed
    lib = polynomial_library(2, 1, 1, ["y", "v", "u"])
    theta = np.zeros((len(lib), 2))
    theta[lib.index("v"), 0] = 1.0
    theta[lib.index("u"), 1] = 1.0
    m = SparseModel(lib, theta, ("y", "v"), ("u",))
    opts = SimOptions(clip={"y": (0.0, 1.0)}, stops={"y": "v"}, backend=backend)
    tr = simulate(m, [0.0, 0.0], np.ones((400, 1)), opts, dt=0.01)
    assert tr.states[:, 0].max() == 1.0
    hold = tr.states[:, 0] == 1.0
    assert hold[-50:].all()
    assert not tr.states[hold, 1].any()


def test_backends_agree(rng):
    lib2 = polynomial_library(2, 1, 2, ["z", "ydot", "u"])
    theta = rng.standard_normal((len(lib2), 2)) * 0.1
    m = SparseModel(lib2, theta, ("z", "ydot"), ("u",))
    U = rng.standard_normal((200, 1))
    opts = dict(clip={0: (-2.0, 2.0)}, stops={0: 1})
    a = simulate(m, [0.1, -0.2], U, SimOptions(backend="numpy", **opts), dt=0.01)
    if not kernels.NUMBA_AVAILABLE:
        pytest.skip("numba unavailable")
    b = simulate(m, [0.1, -0.2], U, SimOptions(backend="numba", **opts), dt=0.01)
    np.testing.assert_allclose(a.states, b.states, rtol=1e-12, atol=1e-12)


def test_custom_terms_use_reference_path():
    lib = polynomial_library(1, 0, 1, ["y"]).extend([custom_term("tanh(y)", lambda v: np.tanh(v[:, 0]), (0,))])
    theta = np.zeros((3, 1))
    theta[2, 0] = -1.0
    m = SparseModel(lib, theta, ("y",), ())
    tr = simulate(m, [1.0], np.zeros((11, 0)), dt=0.1)
    assert 0 < tr.states[-1, 0] < 1.0


def test_simoptions_validation():
    with pytest.raises(ParameterError):
        SimOptions(substeps=0)
