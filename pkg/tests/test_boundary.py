import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from porelbm.boundary import (
    FALLBACK_CHAIN,
    SCHEMES,
    WallBoundary,
    WallLinkSet,
    cli,
    crossing_links,
    iebb,
    iebb_weight,
    libb,
    mr,
    periodic_pressure_exchange,
    qibb,
    sbb,
    scheme_coefficients,
)
from porelbm.collision import CollisionConfig, ConfigurationError
from porelbm.engine import Simulation, SimulationConfig
from porelbm.geometry import Channel, Sphere, SpherePack
from porelbm.lattice import E, W, equilibrium


def test_sbb_copies():
    assert sbb(0.03) == 0.03


def test_libb_coefficients():
    a, b = 0.7, 0.2
    assert libb(0.25, b, 99.0, a) == pytest.approx(0.5 * a + 0.5 * b)
    assert libb(0.75, b, a, 99.0) == pytest.approx(a / 3 + 2 * b / 3)
    assert libb(0.5, b, a, 99.0) == b


def test_qibb_coefficients():
    f1, f2, f3 = 0.3, 0.5, 0.11
    # q = 1/4: q(1+2q), 1-4q^2, -q(1-2q)
    assert qibb(0.25, f1, 9.0, f2, 9.0, f3) == pytest.approx(0.375 * f1 + 0.75 * f2 - 0.125 * f3)
    assert qibb(0.5, f1, 9.0, 9.0, 9.0, 9.0) == f1


def test_iebb_weight():
    assert iebb_weight(0.75, 1.0) == pytest.approx(1 / 3)
    assert iebb_weight(0.5, 1.3) == 0.0
    with pytest.raises(ConfigurationError):
        iebb_weight(0.25, 0.5)


def test_iebb_rest_state():
    k = 1
    out = iebb(0.75, k, 1.2, W[k], 1.0, np.zeros(3))
    assert out == pytest.approx(W[k], abs=1e-17)
    out = iebb(0.25, k, 1.2, W[k], 1.0, np.zeros(3), np.zeros(3))
    assert out == pytest.approx(W[k], abs=1e-17)


def test_cli_coefficients():
    f1, fb1, f2 = 0.3, 0.4, 0.5
    assert cli(0.25, f1, fb1, f2) == pytest.approx(f2 / 3 - fb1 / 3 + f1)
    assert cli(0.5, f1, fb1, f2) == f1


def test_mr_coefficients_at_half():
    # (1 - 2q - 2q^2) / (1 + q)^2 = -2/9 and q^2 / (1 + q)^2 = 1/9
    f1, fb1, f2, fb2, f3 = 0.3, 0.4, 0.5, 0.6, 0.7
    expect = -2 / 9 * f2 + 1 / 9 * f3 + 2 / 9 * fb1 - 1 / 9 * fb2 + f1
    assert mr(0.5, f1, fb1, f2, fb2, f3) == pytest.approx(expect, abs=1e-15)


@pytest.mark.parametrize("scheme", ["LIBB", "QIBB", "CLI", "MR"])
@settings(max_examples=50, deadline=None)
@given(q=st.floats(0.01, 1.0))
def test_vector_coefficients_match_scalar(scheme, q):
    rng = np.random.default_rng(0)
    v = rng.random(5)
    c, used = scheme_coefficients(scheme, np.array([q]), np.array([True]), np.array([True]))
    assert used[0] == scheme
    fn = {"LIBB": lambda: libb(q, v[0], v[1], v[2]),
          "QIBB": lambda: qibb(q, *v),
          "CLI": lambda: cli(q, v[0], v[1], v[2]),
          "MR": lambda: mr(q, *v)}[scheme]
    assert c[0] @ v == pytest.approx(fn(), rel=1e-12, abs=1e-14)


@settings(max_examples=50, deadline=None)
@given(q=st.floats(0.01, 1.0))
def test_linear_schemes_reproduce_constant_state(q):
    # a uniform field is reconstructed exactly: the coefficients on k and kbar sum to one
    for scheme in ("LIBB", "QIBB", "CLI", "MR"):
        c, _ = scheme_coefficients(scheme, np.array([q]), np.array([True]), np.array([True]))
        assert c[0].sum() == pytest.approx(1.0, abs=1e-12)


def test_fallback_cascade():
    q = np.array([0.3, 0.3, 0.3, 0.7])
    has2 = np.array([True, True, False, True])
    has3 = np.array([True, False, False, False])
    _, used = scheme_coefficients("MR", q, has2, has3)
    assert list(used) == ["MR", "CLI", "SBB", "CLI"]
    _, used = scheme_coefficients("MR", q, has2, has3, fallback="sbb")
    assert list(used) == ["MR", "SBB", "SBB", "SBB"]
    _, used = scheme_coefficients("QIBB", q, has2, has3)
    assert list(used) == ["QIBB", "LIBB", "SBB", "QIBB"]


def test_chains_end_in_sbb():
    assert set(FALLBACK_CHAIN) == set(SCHEMES)
    for chain in FALLBACK_CHAIN.values():
        assert chain[-1] == "SBB"


def test_unknown_scheme():
    with pytest.raises(ConfigurationError):
        scheme_coefficients("XYZ", np.array([0.5]), np.array([True]), np.array([True]))


def test_pressure_exchange_uniform():
    gin, gout = periodic_pressure_exchange(W, W, 0.01)
    assert np.allclose(gin, 1.01 * W, rtol=0, atol=1e-17)
    assert np.allclose(gout, 0.99 * W, rtol=0, atol=1e-17)
    gin, gout = periodic_pressure_exchange(W, W, 0.0)
    assert np.array_equal(gin, W)
    # uniform injection carries no net momentum
    assert np.allclose((gin - W) @ E, 0.0, atol=1e-18)


def test_crossing_links_open_box():
    w_in, w_out = crossing_links(np.zeros((4, 3, 2), dtype=bool), axis=0)
    # five directions with c_x = +1: one axis (1/18) and four diagonals (1/36)
    assert w_in == pytest.approx(6 * (1 / 18 + 4 / 36))
    assert w_out == pytest.approx(w_in)


def _sphere_links():
    g = SpherePack(shape=(10, 10, 10), spheres=[Sphere((5.2, 4.9, 5.1), 3.1)])
    from porelbm.geometry import voxelize

    return g, WallLinkSet.build(voxelize(g), g)


def test_link_set_q_range():
    _, links = _sphere_links()
    assert len(links) > 0
    assert np.all((links.q > 0) & (links.q <= 1))
    assert links.missed == 0
    assert "wall links" in links.report()


@pytest.mark.parametrize("scheme", SCHEMES)
def test_rest_state_preserved(scheme):
    g, links = _sphere_links()
    wb = WallBoundary(links, scheme, omega=1.2)
    f = np.broadcast_to(W, (10, 10, 10, 19)).copy()
    vals = wb.values(f)
    assert np.allclose(vals, W[links.kbar], rtol=0, atol=1e-16)
    out = f.copy()
    wb.apply(f, out)
    assert np.allclose(out, f, rtol=0, atol=1e-16)
    assert np.allclose(wb.momentum_exchange(f, out), 0.0, atol=1e-14)


@pytest.mark.parametrize("scheme", [s for s in SCHEMES if s != "MR"])
def test_half_way_links_equal_sbb(scheme):
    # channel walls at integer planes put every link at q = 1/2
    g = Channel(shape=(3, 8, 2), lower=1.0, upper=7.0)
    from porelbm.geometry import voxelize

    links = WallLinkSet.build(voxelize(g), g)
    assert np.allclose(links.q, 0.5)
    f = equilibrium(1.0, np.zeros((3, 8, 2, 3))) + 0.01 * np.random.default_rng(0).random((3, 8, 2, 19))
    ref = WallBoundary(links, "SBB").values(f)
    got = WallBoundary(links, scheme, omega=1.3).values(f)
    assert np.array_equal(got, ref)


def test_kernel_and_numpy_paths_agree():
    g, links = _sphere_links()
    f = equilibrium(1.0, np.zeros((10, 10, 10, 3))) + 0.01 * np.random.default_rng(1).random((10, 10, 10, 19))
    for scheme in ("LIBB", "QIBB", "CLI", "MR"):
        wb = WallBoundary(links, scheme)
        out = f.copy()
        vals = wb.apply(f, out, drho=1e-3)
        assert np.allclose(vals, wb.values(f, drho=1e-3), rtol=0, atol=1e-15)


@pytest.mark.parametrize("scheme", ["SBB", "LIBB", "CLI", "MR", "IEBB"])
def test_channel_flow_symmetric(scheme):
    g = Channel(shape=(3, 10, 1), lower=1.3, upper=8.7)
    cfg = SimulationConfig(
        geometry=g, collision=CollisionConfig("TRT", nu=0.1, magic=3 / 16), wall=scheme,
        drho=1e-4, max_steps=3000, tol=1e-10, window_steps=100, monitor="u",
    )
    sim = Simulation(cfg)
    sim.run()
    _, u = sim.macroscopic()
    prof = u[0, :, 0, 0]
    assert np.allclose(prof, prof[::-1], rtol=0, atol=1e-12 * prof.max())
    assert np.all(prof[2:-2] > 0)
