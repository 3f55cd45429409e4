import json
from fractions import Fraction
from types import SimpleNamespace

import numpy as np
import pytest

from oracles import classical_line_bundle_exponents, trapezoid_reference
from topotoric.equivariance import (
    AveragedTrivialization,
    EquivariantSetup,
    GaugeTerm,
    PresentedBundle,
    SetupError,
    ball_points,
    bundled_setup,
    compact_torus,
    cocycle_equivariance_residual,
    cocycle_residual,
    diagonalize_family,
    eigenframe_residual,
    equivariance_residual,
    extend_frame,
    haar_average,
    line_bundle_cocycle,
    load_setup,
    measure_fiber,
    radial,
    run_pipeline,
    scrambled_bundle,
    transport,
    transport_scalar,
    winding_numbers,
)
from topotoric.fan import load_bundled_fan
from topotoric.rring import ZERO, RScalar, RVector, char_eval


def R(b, c, v):
    return RScalar(Fraction(b), Fraction(c), v)


def make_setup(name, **changes):
    path = bundled_setup(name)
    doc = json.loads(path.read_text())
    doc.update(changes)
    return EquivariantSetup.from_json(doc, base=path.parent)


def rank_one(b="1", c="1/2", v=1, **changes):
    return make_setup("n1k2_twisted", characters=[[{"b": b, "c": c, "v": v}]], **changes)


@pytest.fixture(scope="module")
def averaged_n1():
    setup = load_setup(bundled_setup("n1k2_twisted"))
    bundle = scrambled_bundle(setup)
    fiber = measure_fiber(bundle)
    return setup, bundle, fiber, haar_average(bundle, fiber)


@pytest.mark.parametrize("name", ["n1k1", "n2k2"])
def test_trivial_gauge_is_fixed_by_averaging(name, rng):
    setup = load_setup(bundled_setup(name))
    bundle = PresentedBundle(setup, np.eye(setup.k), [])
    fiber = measure_fiber(bundle)
    assert np.array_equal(fiber.Q, np.eye(setup.k))
    phi = haar_average(bundle, fiber).phi(ball_points(setup.n, setup.epsilon, 20, rng))
    assert np.max(np.abs(phi - np.eye(setup.k))) < 1e-14


def test_raw_gauge_is_not_equivariant(averaged_n1, rng):
    setup, bundle, fiber, avg = averaged_n1
    assert equivariance_residual(bundle, fiber, None, 64, rng) > 0.1
    assert equivariance_residual(bundle, fiber, avg.phi, 500, rng) < 1e-9


def test_fiber_weights_match_characters(averaged_n1):
    setup, bundle, fiber, _ = averaged_n1
    truth = sorted(tuple(c.v) for c in setup.characters)
    assert sorted(tuple(w) for w in fiber.v) == truth
    assert fiber.winding_error < 1e-6


def test_fixed_point_conjugation(averaged_n1, rng):
    setup, bundle, fiber, avg = averaged_n1
    zero = np.zeros((1, setup.n))
    phi0 = avg.phi(zero)[0]
    for g in compact_torus(setup.n, 10, rng):
        lhs = phi0 @ bundle.act(g[None], zero)[0]
        rhs = fiber.model(g) @ phi0
        assert np.allclose(lhs, rhs, atol=1e-12)


@pytest.mark.parametrize("name", ["n1k2_twisted", "n2k2"])
def test_kernel_matches_direct_quadrature(name, rng):
    setup = load_setup(bundled_setup(name))
    bundle = scrambled_bundle(setup)
    fiber = measure_fiber(bundle)
    x = ball_points(setup.n, setup.epsilon, 5, rng)
    fast = bundle.haar_integral(x, fiber.Qinv, fiber.v, 16)
    slow = bundle.haar_integral_direct(x, fiber.Qinv, fiber.v, 16)
    assert np.max(np.abs(fast - slow)) < 1e-12


def test_direct_quadrature_matches_plain_trapezoid(averaged_n1):
    setup, bundle, fiber, _ = averaged_n1
    x = np.array([[0.3 + 0.1j]])

    def integrand(theta):
        g = np.exp(1j * theta)[None]
        return (np.exp(-1j * fiber.v @ theta)[:, None] * fiber.Qinv) @ bundle.act(g, x)[0]

    ref = trapezoid_reference(integrand, setup.n, 16)
    assert np.allclose(bundle.haar_integral_direct(x, fiber.Qinv, fiber.v, 16)[0], ref, atol=1e-13)


def test_coarse_quadrature_aliases(averaged_n1, rng):
    setup, bundle, fiber, _ = averaged_n1
    coarse = AveragedTrivialization(bundle, fiber, 4)
    assert equivariance_residual(bundle, fiber, coarse.phi, 200, rng) > 1e-6


def test_quadrature_plateau(averaged_n1, rng):
    setup, bundle, fiber, avg = averaged_n1
    x = ball_points(setup.n, setup.epsilon, 16, rng)
    fine = AveragedTrivialization(bundle, fiber, 128)
    assert np.max(np.abs(avg.phi(x) - fine.phi(x))) < 1e-12


def test_eigenframe(averaged_n1, rng):
    setup, bundle, fiber, avg = averaged_n1
    assert eigenframe_residual(bundle, fiber, avg.frame, 500, rng) < 1e-9


def test_rank_one_transport_closed_form(rng):
    setup = rank_one()
    bundle = scrambled_bundle(setup)
    fiber = measure_fiber(bundle)
    frame = haar_average(bundle, fiber).frame
    rho = np.concatenate([np.ones((1, 1)), radial(1, 8, rng, 0.3)])
    x = ball_points(1, 0.3, 10, rng)
    tr = transport(bundle, frame, rho, x)
    assert tr.valid.all()
    want = np.asarray(char_eval(setup.characters[0], rho.astype(complex)))
    got = tr.A[..., 0, 0]
    assert np.max(np.abs(got - want[:, None])) < 1e-10
    assert np.max(np.abs(got[0] - 1)) < 1e-12
    scalar = transport_scalar(bundle, frame, rho, x)
    assert np.max(np.abs(scalar - got)) < 1e-12


def test_transport_domain_is_enforced(averaged_n1):
    setup, bundle, fiber, avg = averaged_n1
    x = np.array([[0.5 * setup.epsilon]])
    tr = transport(bundle, avg.frame, np.array([[0.1], [1.0]]), x)
    assert not tr.valid[0, 0] and tr.valid[1, 0]
    assert np.isnan(tr.A[0, 0]).all()


def test_torus_between(rng):
    setup = load_setup(bundled_setup("n2k2"))
    bundle = PresentedBundle(setup, np.eye(setup.k), [])
    x = ball_points(2, 0.5, 20, rng, min_modulus=0.05)
    y = ball_points(2, 0.5, 20, rng, min_modulus=0.05)
    s = bundle.torus_between(x, y)
    assert np.allclose(bundle.chart_act(s, x), y, rtol=1e-12)


def test_diagonalize_already_diagonal(rng):
    mats = np.array([np.diag(rng.normal(size=3) + 1j) for _ in range(4)])
    d = diagonalize_family(mats, rng)
    assert np.array_equal(d.P, np.eye(3))


def test_diagonalize_repeated_eigenvalue(rng):
    V = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
    Vinv = np.linalg.inv(V)
    diags = [np.diag([a, a, b, c]) for a, b, c in rng.normal(size=(5, 3)) + 2]
    mats = np.array([V @ D @ Vinv for D in diags])
    d = diagonalize_family(mats, rng)
    assert d.offdiag < 1e-10
    conj = d.P @ mats @ np.linalg.inv(d.P)
    assert np.allclose(conj, np.einsum("...ii->...i", conj)[..., None] * np.eye(4), atol=1e-9)


def test_winding_numbers():
    ints, err = winding_numbers(lambda g: np.stack([g[:, 0] ** 3 * g[:, 1] ** -2, g[:, 1]], axis=-1), 2)
    assert ints.tolist() == [[3, 0], [-2, 1]]
    assert err < 1e-12


def test_rank_one_recovery():
    rep = run_pipeline(rank_one(b="3/2", c="-1/3", v=1))
    assert rep["pass"], rep["checks"]
    assert rep["recovery"]["characters"] == [[{"b": "3/2", "c": "-1/3", "v": 1}]]


def test_pipeline_recovers_twisted_pair():
    setup = load_setup(bundled_setup("n1k2_twisted"))
    rep = run_pipeline(setup)
    assert rep["pass"], rep["checks"]
    got = {json.dumps(c) for c in rep["recovery"]["characters"]}
    assert got == {json.dumps(c.to_json()) for c in setup.characters}


def test_non_admissible_gauge_breaks_x_independence():
    setup = make_setup("n1k1")
    # |w|^2 survives the G-average but scales like r^2 along real directions
    bundle = PresentedBundle(setup, np.eye(1), [GaugeTerm((1,), (1,), 0, 0, 0.3 + 0j)])
    rep = run_pipeline(setup, bundle=bundle)
    assert rep["checks"]["step1_equivariance"]["pass"]
    assert not rep["checks"]["x_independence"]["pass"]
    assert not rep["pass"]


def test_admissible_explicit_gauge_passes():
    setup = make_setup("n1k2_twisted")
    # w carries (1-i/2,1) = chi_1 - chi_0, so it may sit in entry (1, 0); the others average out
    terms = [GaugeTerm((1,), (0,), 1, 0, 0.4 + 0j), GaugeTerm((2,), (0,), 0, 1, 0.2 + 0.1j),
             GaugeTerm((3,), (1,), 1, 0, 0.05j)]
    bundle = PresentedBundle(setup, np.array([[1, 0.3], [0.2j, 1]]), terms)
    rep = run_pipeline(setup, bundle=bundle)
    assert rep["pass"], rep["checks"]


def test_wrong_characters_fail_extension(rng):
    setup = rank_one()
    bundle = scrambled_bundle(setup)
    fiber = measure_fiber(bundle)
    frame = haar_average(bundle, fiber).frame
    chi = setup.characters[0]

    def rec(db):
        b = np.array([[float(chi[0].b) + db]])
        c = np.array([[float(chi[0].c)]])
        v = np.array([[chi[0].v]])
        t_vals = lambda t: np.exp(np.log(np.abs(t)) @ (b + 1j * c).T + 1j * np.angle(t) @ v.T)
        return SimpleNamespace(char_values=t_vals)

    good = extend_frame(bundle, frame, rec(0.0), 500, rng, pool=100)
    bad = extend_frame(bundle, frame, rec(1e-3), 500, rng, pool=100)
    assert good["residual"] < 1e-9
    assert good["identity_residual"] < 1e-12
    assert bad["residual"] > 1e-4


def test_setup_errors():
    with pytest.raises(SetupError):
        make_setup("n1k1", chart=[1, 2])
    with pytest.raises(SetupError):
        make_setup("n1k1", characters=[])
    with pytest.raises(SetupError):
        make_setup("n2k1", characters=[[{"b": "1", "c": "0", "v": 1}]])
    with pytest.raises(SetupError):
        EquivariantSetup.from_json({"chart": [1]})


def test_setup_roundtrip():
    setup = load_setup(bundled_setup("n2k3"))
    again = EquivariantSetup.from_json(json.loads(json.dumps(setup.to_json())))
    assert again.characters == setup.characters
    assert again.chart == setup.chart


def test_ill_conditioned_gauge_rejected():
    setup = make_setup("n1k1", gauge={"terms": 6, "degree": 5, "scale": 0.06, "h0_scale": 0.5},
                       tolerances={"condition": 1.0})
    with pytest.raises(SetupError):
        scrambled_bundle(setup)


def k1(k):
    return R(k, 0, k)


def test_trivial_line_bundle():
    fan = load_bundled_fan("twisted_cp2")
    coc = line_bundle_cocycle(fan, {})
    assert all(e == ZERO for ex in coc.exponents.values() for e in ex)


@pytest.mark.parametrize("name,a", [
    ("cp1", {1: 1, 2: 0}),
    ("cp1", {1: 2, 2: -1}),
    ("cp2", {1: 1, 2: 0, 3: 0}),
    ("cp2", {1: 0, 2: 2, 3: -1}),
    ("hirzebruch1", {1: 1, 2: 0, 3: 1, 4: 2}),
])
def test_classical_line_bundles(name, a):
    fan = load_bundled_fan(name)
    coc = line_bundle_cocycle(fan, {i: k1(x) for i, x in a.items()})
    v_rays = [list(fan.beta(i).v) for i in range(1, fan.m + 1)]
    cones = [tuple(sorted(c)) for c in fan.maximal_cones]
    ref = classical_line_bundle_exponents(v_rays, cones, a)
    for key, ints in ref.items():
        assert list(coc.exponents[key]) == [k1(x) for x in ints]


@pytest.mark.parametrize("name", ["cp1", "cp2", "twisted_cp1", "twisted_cp2"])
def test_line_bundle_cocycle_residuals(name, rng):
    fan = load_bundled_fan(name)
    a = {i: R(i % 2, Fraction(i, 3), i % 2) for i in range(1, fan.m + 1)}
    coc = line_bundle_cocycle(fan, a)
    assert cocycle_residual(coc, 100, rng) < 1e-9
    assert cocycle_equivariance_residual(coc, 100, rng) < 1e-9
