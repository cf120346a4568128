import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from porelbm.geometry import (
    Channel,
    GeometryError,
    Sphere,
    SpherePack,
    domain_size_for_fraction,
    read_pack,
    single_sphere_rev,
    solid_fraction,
    voxelize,
    write_pack,
)


def test_zero_radius_all_fluid():
    g = SpherePack(shape=(5, 5, 5), spheres=[Sphere((2.5, 2.5, 2.5), 0.0)])
    assert not voxelize(g).any()


def test_covering_sphere_all_solid():
    g = SpherePack(shape=(5, 5, 5), spheres=[Sphere((2.5, 2.5, 2.5), 10.0)])
    assert voxelize(g).all()


def test_touching_spheres():
    assert domain_size_for_fraction(3.0, math.pi / 6) == pytest.approx(6.0, rel=1e-11)


def test_dilute_formula():
    r = 2.5
    expect = r * (4 * math.pi / (3 * 0.05)) ** (1 / 3)
    assert domain_size_for_fraction(r, 0.05) == pytest.approx(expect, rel=1e-11)


def test_unreachable_fraction():
    with pytest.raises(GeometryError):
        domain_size_for_fraction(1.0, 0.99)
    with pytest.raises(GeometryError):
        domain_size_for_fraction(1.0, 0.0)




def test_fraction_at_point_six_by_voxel_count():
    # the disjoint-cap formula against a 512^3 voxel count of a sphere whose
    # caps cross the faces; cells outside the cube are folded back by symmetry
    n = 512
    ratio = domain_size_for_fraction(1.0, 0.6)
    R = n / ratio
    c = np.arange(n) + 0.5 - n / 2
    yz2 = c[:, None] ** 2 + c[None, :] ** 2
    count = 0
    for x in c:
        count += np.count_nonzero(yz2 + x * x <= R * R)
    frac = count / n**3
    assert frac == pytest.approx(0.6, abs=2e-4)
    assert 1.0 / ratio == pytest.approx(0.5, abs=0.05)


def test_voxel_fraction_at_r_16_5():
    g = single_sphere_rev(16.5, 0.6)
    assert voxelize(g).mean() == pytest.approx(0.6, rel=0.01)


def test_exact_fraction_rescales_radius():
    g = single_sphere_rev(6.0, 0.6)
    assert g.solid_fraction() == pytest.approx(0.6, rel=1e-10)
    h = single_sphere_rev(6.0, 0.6, exact_fraction=False)
    assert h.spheres[0].radius == 6.0


def test_wall_distance_axis():
    g = SpherePack(shape=(20, 20, 20), spheres=[Sphere((0.0, 0.0, 0.0), 2.0)])
    q = g.wall_distance(np.array([[2.5, 0, 0], [3.0, 0, 0]]), np.array([[-1, 0, 0], [-1, 0, 0]]))
    assert q == pytest.approx([0.5, 1.0], abs=1e-14)


def test_wall_distance_miss_is_nan():
    g = SpherePack(shape=(20, 20, 20), spheres=[Sphere((0.0, 0.0, 0.0), 2.0)])
    q = g.wall_distance(np.array([[5.0, 5.0, 0.0]]), np.array([[1, 0, 0]]))
    assert np.isnan(q[0])


@settings(max_examples=50, deadline=None)
@given(
    st.floats(1.5, 4.0),
    st.tuples(st.floats(-0.5, 0.5), st.floats(-0.5, 0.5), st.floats(-0.5, 0.5)),
    st.sampled_from([(1, 1, 0), (-1, 0, 1), (0, -1, -1), (1, -1, 0)]),
)
def test_wall_distance_diagonal_residual(r, shift, e):
    center = np.array([10.0, 10.0, 10.0]) + np.array(shift)
    g = SpherePack(shape=(20, 20, 20), spheres=[Sphere(tuple(center), r)])
    e = np.array(e, dtype=float)
    # a fluid point just outside the sphere, one link away from the surface
    x = center - e / np.linalg.norm(e) * (r + 0.5)
    q = g.wall_distance(x[None], e[None])[0]
    assert 0 < q <= 1
    assert abs(np.linalg.norm(x + q * e - center) - r) < 1e-12


def test_wall_distance_through_periodic_image():
    g = SpherePack(shape=(10, 10, 10), spheres=[Sphere((0.5, 5.0, 5.0), 1.0)])
    q = g.wall_distance(np.array([[8.5, 5.0, 5.0]]), np.array([[1, 0, 0]]))
    # the image at x = 10.5 has its surface at 9.5
    assert q[0] == pytest.approx(1.0, abs=1e-14)


def test_displacement_changes_only_surface_cells():
    a = voxelize(single_sphere_rev(4.5, 0.6, offset=0.0))
    b = voxelize(single_sphere_rev(4.5, 0.6, offset=0.3))
    diff = a ^ b
    assert diff.any()
    core = voxelize(SpherePack(a.shape, [Sphere(tuple([a.shape[0] / 2] * 3), 4.5 - 1.0)]))
    assert not (diff & core).any()


def test_channel_wall_distance():
    g = Channel(shape=(2, 8, 1), lower=1.0, upper=7.0)
    q = g.wall_distance(np.array([[0.5, 1.5, 0.5], [0.5, 6.5, 0.5]]), np.array([[0, -1, 0], [1, 1, 0]]))
    assert q == pytest.approx([0.5, 0.5])


def test_pack_round_trip(tmp_path):
    g = SpherePack(shape=(7, 8, 9), spheres=[Sphere((1.1, 2.2, 3.3), 1.7), Sphere((5.0, 5.0, 5.0), 0.1 + 0.2)],
                   periodic=(True, False, True))
    p = tmp_path / "pack.txt"
    write_pack(g, p)
    h = read_pack(p)
    assert h == g


def test_pack_bad_keyword(tmp_path):
    p = tmp_path / "bad.txt"
    p.write_text("shape 2 2 2\ncube 1 1 1 1\n")
    with pytest.raises(GeometryError):
        read_pack(p)
