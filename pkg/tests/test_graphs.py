import numpy as np
import pytest

from plapdecay import (LatticeSpec, ball_volume, build_lattice, distance,
                       lattice_ball_count, load_edge_list,
                       volume_growth_constant)


def closed_form_count(dim, radius):
    # Independent oracle for the truncation size, dims 1 and 2 only.
    if dim == 1:
        return 2 * radius + 1
    if dim == 2:
        return 2 * radius * radius + 2 * radius + 1
    raise ValueError(dim)


class TestBuildLattice:
    def test_z1_radius2(self, z1_r2):
        g = z1_r2
        assert g.n == 5
        assert sorted(g.labels) == [(-2,), (-1,), (0,), (1,), (2,)]
        assert np.all(g.measure == 2.0)
        for lab in [(-2,), (2,)]:
            assert g.ghost[g.index_of(lab)] == 1.0
        for lab in [(-1,), (0,), (1,)]:
            assert g.ghost[g.index_of(lab)] == 0.0

    def test_z2_radius1(self, z2_r1):
        g = z2_r1
        assert g.n == 5
        assert np.all(g.measure == 4.0)
        assert g.ghost[g.index_of((0, 0))] == 0.0
        assert g.ghost[g.index_of((1, 0))] == 3.0

    def test_weight_scales_measure(self):
        g = build_lattice(LatticeSpec(dim=1, radius=1, weight=3.0))
        assert np.all(g.measure == 6.0)

    def test_vertex_cap(self):
        with pytest.raises(ValueError, match="cap"):
            build_lattice(LatticeSpec(dim=3, radius=100), vertex_cap=1000)

    def test_spec_validation(self):
        with pytest.raises(ValueError):
            LatticeSpec(dim=0, radius=1)
        with pytest.raises(ValueError):
            LatticeSpec(dim=1, radius=0)
        with pytest.raises(ValueError):
            LatticeSpec(dim=1, radius=1, weight=0.0)

    @pytest.mark.parametrize("dim,radius", [(1, 1), (1, 7), (2, 1), (2, 5)])
    def test_ball_count_matches_closed_form(self, dim, radius):
        expected = closed_form_count(dim, radius)
        assert lattice_ball_count(dim, radius) == expected
        assert build_lattice(LatticeSpec(dim, radius)).n == expected

    def test_root_is_origin_at_index_zero(self, z2_r1):
        assert z2_r1.labels[0] == (0, 0)
        assert z2_r1.dist[0] == 0

    def test_edge_symmetry(self, z2_r6):
        g = z2_r6
        stored = {}
        for x in range(g.n):
            for y, w in g.neighbors(x):
                stored[(x, y)] = w
        for (x, y), w in stored.items():
            assert stored[(y, x)] == w
        assert not any(x == y for x, y in stored)

    def test_measure_is_weightsum_plus_ghost(self, z2_r6):
        g = z2_r6
        for x in range(g.n):
            wsum = sum(w for _, w in g.neighbors(x))
            assert g.measure[x] == pytest.approx(wsum + g.ghost[x], rel=1e-15)

    def test_arrays_are_readonly(self, z1_r2):
        with pytest.raises(ValueError):
            z1_r2.measure[0] = 5.0


class TestDistance:
    def test_identity(self, z2_r6):
        assert distance(z2_r6, 3, 3) == 0

    def test_z2_hand_path(self, z2_r6):
        g = z2_r6
        assert distance(g, g.index_of((1, 1)), g.index_of((0, 0))) == 2

    def test_z1_hand_path(self, z1_r10):
        g = z1_r10
        assert distance(g, g.index_of((3,)), g.index_of((-2,))) == 5

    def test_symmetry_sampled(self, z2_r6):
        g = z2_r6
        rng = np.random.default_rng(7)
        for _ in range(20):
            x, y = rng.integers(0, g.n, size=2)
            assert distance(g, int(x), int(y)) == distance(g, int(y), int(x))

    def test_matches_precomputed_root_distance(self, z2_r6):
        g = z2_r6
        for x in range(0, g.n, 7):
            assert distance(g, x, g.root) == g.dist[x]

    def test_out_of_range(self, z1_r2):
        with pytest.raises(ValueError):
            distance(z1_r2, 0, 99)


class TestBallVolume:
    def test_z1(self, z1_r2):
        assert ball_volume(z1_r2, 1) == 6.0

    def test_z2(self, z2_r1):
        assert ball_volume(z2_r1, 1) == 20.0

    def test_radius_zero_is_root_measure(self, z2_r1):
        assert ball_volume(z2_r1, 0) == z2_r1.measure[0]

    def test_beyond_truncation(self, z1_r2):
        with pytest.raises(ValueError, match="truncation"):
            ball_volume(z1_r2, 3)

    def test_nondecreasing_in_radius(self, z2_r6):
        vols = [ball_volume(z2_r6, R) for R in range(z2_r6.radius + 1)]
        assert all(b >= a for a, b in zip(vols, vols[1:]))


class TestVolumeGrowth:
    def test_z1_hand_values(self, z1_r10):
        # mu(B(1))=6, mu(B(2))=10, mu(B(4))=18 on the unit-weight line
        assert volume_growth_constant(z1_r10, 1, [1, 2, 4]) == 6.0

    def test_single_radius(self, z2_r6):
        assert volume_growth_constant(z2_r6, 2, [1]) == ball_volume(z2_r6, 1)

    def test_z2_attained_at_small_radius(self, z2_r6):
        g = z2_r6
        radii = range(1, g.radius + 1)
        c = volume_growth_constant(g, 2, radii)
        assert np.isfinite(c)
        ratios = [ball_volume(g, R) / R**2 for R in radii]
        assert c == max(ratios) == ratios[0]

    def test_empty_audit(self, z1_r2):
        with pytest.raises(ValueError):
            volume_growth_constant(z1_r2, 1, [])


class TestEdgeListLoader:
    def test_round_trip(self, tmp_path):
        path = tmp_path / "g.txt"
        path.write_text(
            "# a path with one ghost edge\n"
            "root 10\n"
            "10 11 1.0\n"
            "11 12 2.5\n"
            "ghost 12 0.5\n")
        g = load_edge_list(path)
        assert g.n == 3
        assert g.labels[0] == 10
        assert g.measure[g.index_of(11)] == pytest.approx(3.5)
        assert g.measure[g.index_of(12)] == pytest.approx(3.0)
        assert g.ghost[g.index_of(12)] == 0.5
        assert g.dist[g.index_of(12)] == 2

    def test_singleton_convention(self, singleton):
        assert singleton.n == 1
        assert singleton.measure[0] == 1.0

    def test_singleton_with_ghost_uses_ghost_measure(self, tmp_path):
        path = tmp_path / "g.txt"
        path.write_text("root 0\nghost 0 2.0\n")
        g = load_edge_list(path)
        assert g.measure[0] == 2.0

    @pytest.mark.parametrize("content,msg", [
        ("0 1 1.0\n", "root"),
        ("root 0\n0 0 1.0\n", "self-loop"),
        ("root 0\n0 1 -1.0\n", "weight"),
        ("root 0\n0 1 1.0\n1 0 1.0\n", "duplicate"),
        ("root 0\n0 1 1.0\n2 3 1.0\n", "not connected"),
        ("root 0\nroot 1\n0 1 1.0\n", "duplicate root"),
        ("root 0\n0 1\n", "expected"),
    ])
    def test_rejects_malformed(self, tmp_path, content, msg):
        path = tmp_path / "bad.txt"
        path.write_text(content)
        with pytest.raises(ValueError, match=msg):
            load_edge_list(path)
