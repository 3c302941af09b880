from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np
import pytest
from scipy.integrate import quad
from scipy.optimize import minimize_scalar

from convexgeo.errors import CertificationError, InapplicableError
from convexgeo.functions import get_function, height_function
from convexgeo.manifolds import get_manifold, height
from convexgeo.minimize import (
    MinimizeTrace,
    _mu_equation,
    beta,
    gradient_descent,
    loop_search,
    regularized_minimize,
    solve_mu1,
    soul_region_check,
)
from convexgeo.warped import energy, m3

FIXTURE = json.loads((Path(__file__).parent / "fixtures" / "mu1_beta.json").read_text())

SUITE = [("zero", "height"), ("hinge", "height"), ("height", "height"), ("zero", "arclength2"),
         ("hinge", "arclength2")]


def grid_argmin(f, half=1.5, n=601):
    """Brute-force minimiser of a chart function on a square grid."""
    axis = np.linspace(-half, half, n)
    X, Y = np.meshgrid(axis, axis, indexing="ij")
    vals = f(np.stack([X, Y], axis=-1))
    i, j = np.unravel_index(np.argmin(vals), vals.shape)
    return np.array([axis[i], axis[j]]), axis[1] - axis[0]


# --- geodesic descent


def test_descent_plane_sqnorm():
    res = gradient_descent(get_manifold("plane"), get_function("sqnorm"), [3.0, 4.0])
    assert res.converged
    assert np.linalg.norm(res.x) <= 1e-8


def test_descent_paraboloid_height_reaches_grid_minimiser():
    f = height_function()
    oracle, cell = grid_argmin(f)
    assert np.linalg.norm(oracle) <= cell
    res = gradient_descent(get_manifold("paraboloid"), f, [1.0, 1.0])
    assert res.converged
    assert np.linalg.norm(res.x - [0, 0]) <= 1e-6


def test_descent_fixed_step():
    res = gradient_descent(get_manifold("plane"), get_function("sqnorm"), [1.0, -1.0], step=0.25)
    assert res.converged and np.linalg.norm(res.x) <= 1e-8


def test_descent_m3_energy_has_no_minimiser():
    res = gradient_descent(get_manifold("m3"), energy(m3()), [0.0, 0.1, 0.2], max_iter=40)
    assert not res.converged
    ts = [x[0] for x in res.history]
    assert ts[-1] < ts[0]
    assert all(b <= a for a, b in zip(ts, ts[1:]))


# --- regularised scheme


def test_zero_objective_stays_at_vertex():
    tr = regularized_minimize(get_manifold("paraboloid"), get_function("zero"), get_function("height"), [0, 0],
                              x0=[0.8, -0.5])
    assert tr.status == "converged"
    for r in tr.records:
        assert np.linalg.norm(r.x) <= 1e-6


def test_u_equal_g_same_minimiser():
    tr = regularized_minimize(get_manifold("paraboloid"), get_function("height"), get_function("height"), [0, 0],
                              x0=[0.5, 0.5])
    assert tr.status == "converged"
    assert all(np.linalg.norm(r.x) <= 1e-6 for r in tr.records)


def test_hinge_run_matches_grid_oracle_per_k():
    M = get_manifold("paraboloid")
    u, g = get_function("hinge"), get_function("height")
    tr = regularized_minimize(M, u, g, [0, 0], x0=[1.0, 1.0])
    assert [r.k for r in tr.records] == [1, 2, 4, 8, 16, 32, 64]
    for r in tr.records:
        oracle, cell = grid_argmin(lambda x: r.k * u(x) + g(x))
        assert np.linalg.norm(r.x - oracle) <= cell
        assert r.u == 0.0 and r.u <= tr.g_p0 / r.k
    assert tr.reports["g"].verdict == "strictly-convex"
    assert tr.reports["u"].verdict in ("convex", "strictly-convex")


@pytest.mark.parametrize("u_key,g_key", SUITE)
def test_scheme_inequalities(u_key, g_key):
    tr = regularized_minimize(get_manifold("paraboloid"), get_function(u_key), get_function(g_key), [0, 0],
                              x0=[1.0, 0.5])
    assert tr.status == "converged"
    for r in tr.records:
        assert r.h <= tr.g_p0 + 1e-8
        assert r.u <= tr.g_p0 / r.k + 1e-8
        assert r.g <= tr.g_p0 + 1e-8
    assert soul_region_check(tr)


def test_nonzero_reference_value_is_shifted():
    # u(p0) = 1 for a constant u; after the shift u(x_k) = 0 everywhere
    tr = regularized_minimize(get_manifold("paraboloid"), get_function("constant", c=1.0, manifold="paraboloid"),
                              get_function("height"), [0, 0], x0=[0.3, 0.0])
    assert all(r.u == 0.0 for r in tr.records)


def test_uncertified_exhaustion_aborts_with_witness():
    with pytest.raises(CertificationError) as info:
        regularized_minimize(get_manifold("torus"), get_function("constant"), get_function("sin2pix"), [0.1, 0.1])
    assert info.value.report.verdict == "non-convex"
    assert info.value.report.witness is not None


def test_partial_status_on_inner_failure():
    tr = regularized_minimize(get_manifold("paraboloid"), get_function("zero"), get_function("height"), [0, 0],
                              x0=[1.0, 1.0], max_iter=1)
    assert tr.status == "partial"
    assert len(tr.records) == 1
    with pytest.raises(InapplicableError):
        soul_region_check(tr)


def test_trace_csv(tmp_path):
    tr = regularized_minimize(get_manifold("paraboloid"), get_function("hinge"), get_function("height"), [0, 0],
                              x0=[1.0, 1.0], schedule=(1, 2))
    tr.to_csv(tmp_path / "t.csv")
    lines = (tmp_path / "t.csv").read_text().splitlines()
    assert lines[0] == "k,x_1,x_2,u,g,h_k,iterations"
    assert len(lines) == 3


# --- the scalar equation and its bound


def test_mu1_residual_and_fixture():
    mu = solve_mu1(1e-12)
    assert abs(_mu_equation(mu)) < 1e-10
    assert mu == pytest.approx(float(FIXTURE["mu1"]), abs=1e-12)
    assert solve_mu1() == pytest.approx(float(FIXTURE["mu1"]), abs=1e-14)


def test_mu_equation_brackets():
    assert _mu_equation(2.0) < 0 < _mu_equation(4.0)
    with pytest.raises(ValueError):
        solve_mu1(0.0)


def test_beta_identity_and_fixture():
    b, mu = beta(), solve_mu1()
    assert b * b / 0.75 - 1 == pytest.approx(mu * mu, rel=1e-15)
    assert b == pytest.approx(float(FIXTURE["beta"]), abs=1e-14)
    assert b > 1


def _trace_at(point, status="converged"):
    from convexgeo.minimize import KRecord

    x = np.asarray(point, dtype=float)
    rec = KRecord(1, x, 0.0, float(height(x)), float(height(x)), 0, True, True, True)
    return MinimizeTrace((1,), [rec], np.zeros(2), 0.0, x, status)


def test_soul_region_synthetic():
    assert soul_region_check(_trace_at([0.0, 0.0]))
    assert not soul_region_check(_trace_at([math.sqrt(3.0), 0.0]))
    with pytest.raises(InapplicableError):
        soul_region_check(_trace_at([0.0, 0.0], status="non-stabilizing"))


# --- geodesic loops


def sweep(c, r):
    """Angle swept between two passages at radius r by a geodesic with
    Clairaut constant c < r, by quadrature after r = c cosh(s)."""
    s_max = math.acosh(r / c)
    return 2 * quad(lambda s: math.sqrt(1 + 4 * c * c * math.cosh(s) ** 2) / math.cosh(s), 0, s_max,
                    epsabs=1e-13, epsrel=1e-13)[0]


def loop_length(c, r):
    s_max = math.acosh(r / c)
    return 2 * quad(lambda s: c * math.cosh(s) * math.sqrt(1 + 4 * c * c * math.cosh(s) ** 2), 0, s_max,
                    epsabs=1e-13, epsrel=1e-13)[0]


def max_sweep(r):
    res = minimize_scalar(lambda c: -sweep(c, r), bounds=(1e-6 * r, r * (1 - 1e-9)), method="bounded",
                          options={"xatol": 1e-10})
    return -res.fun


def test_quadrature_loop_threshold_between_probe_heights():
    # a loop at the base point exists iff some inward geodesic sweeps a full turn
    assert max_sweep(math.sqrt(4.5)) < 2 * math.pi < max_sweep(math.sqrt(5.5))


def test_vertex_is_simple():
    res = loop_search(get_manifold("paraboloid"), [0.0, 0.0], n_directions=360, max_length=50.0)
    assert res.verdict == "simple"
    assert res.loops == []


@pytest.fixture(scope="module")
def loops_z9():
    return loop_search(get_manifold("paraboloid"), [3.0, 0.0], n_directions=120, max_length=50.0)


def test_high_point_has_loops(loops_z9):
    assert loops_z9.verdict == "non-simple"
    assert loops_z9.loops
    for loop in loops_z9.loops:
        assert loop.closure_error < 1e-3
        assert loop.length > 10 * 1e-3


def test_found_loops_match_quadrature(loops_z9):
    r = 3.0
    for loop in loops_z9.loops:
        c = abs(r * loop.direction[1])  # Clairaut constant x v_y - y v_x at (r, 0)
        assert loop.direction[0] < 0  # loops start inward
        turns = sweep(c, r) / (2 * math.pi)
        assert abs(turns - round(turns)) < 1e-6
        assert loop.length == pytest.approx(loop_length(c, r), rel=1e-6)


def test_loop_search_probe_heights():
    M = get_manifold("paraboloid")
    assert loop_search(M, [math.sqrt(4.5), 0.0], n_directions=120).verdict == "simple"
    assert loop_search(M, [math.sqrt(5.5), 0.0], n_directions=120).verdict == "non-simple"


def test_plane_has_no_loops():
    res = loop_search(get_manifold("plane"), [0.3, -0.2], n_directions=36, max_length=20.0)
    assert res.verdict == "simple"


def test_loop_search_json_and_validation():
    M = get_manifold("paraboloid")
    with pytest.raises(ValueError):
        loop_search(M, [0, 0], n_directions=4)
    with pytest.raises(ValueError):
        loop_search(get_manifold("m3"), [0, 0, 0])
    d = json.loads(loop_search(M, [0.0, 0.0], n_directions=8, max_length=5.0).to_json())
    assert d["verdict"] == "simple" and d["n_directions"] == 8
