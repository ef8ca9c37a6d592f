import pytest
from hypothesis import given, settings, strategies as st

from belyi.errors import (
    CompositionMismatch,
    Disconnected,
    NonIntegerGenus,
    NotATriangulation,
    ParseError,
    SizeMismatch,
)
from belyi.hypermap import (
    Hypermap,
    Triangulation,
    are_isomorphic,
    chain,
    cycle_lengths,
    cycle_string,
    cycles,
    from_cycles,
    identity,
    inverse,
    relabel,
    subdivide,
    tripartite_refinement,
)

# A genus-0 bipartite map on 12 half-edges used as a worked example throughout.
PLANE_SIGMA = "(0 2)(1 6 4)(3 5 10)(7 8)(9 11)"
PLANE_ALPHA = "(0 1)(2 3)(4 5)(6 7)(8 9)(10 11)"
PLANE_PHI = "(0 4 3)(1 2 10 9 7)(5 6 8 11)"

# The one-triangle-pair torus: 1 vertex, 3 edges, 2 faces as a directed-edge map.
TORUS_SIGMA = "(0 5 2 1 4 3)"
TORUS_ALPHA = "(0 1)(2 3)(4 5)"
TORUS_PHI = "(0 2 4)(1 3 5)"


def plane_map():
    return Hypermap(
        from_cycles(PLANE_SIGMA, 12),
        from_cycles(PLANE_ALPHA, 12),
        from_cycles(PLANE_PHI, 12),
    )


def torus_map():
    return Hypermap(
        from_cycles(TORUS_SIGMA, 6),
        from_cycles(TORUS_ALPHA, 6),
        from_cycles(TORUS_PHI, 6),
    )


def perms(n):
    return st.permutations(range(n)).map(tuple)


def random_hypermaps(max_n=10):
    @st.composite
    def build(draw):
        n = draw(st.integers(1, max_n))
        sigma = draw(perms(n))
        alpha = draw(perms(n))
        return Hypermap.from_pair(sigma, alpha, n)
    return build()


class TestPermHelpers:
    def test_parse_roundtrip(self):
        p = from_cycles("(0 5 2 1 4 3)")
        assert p == (5, 4, 1, 0, 3, 2)
        assert from_cycles(cycle_string(p), 6) == p

    def test_parse_fixed_points(self):
        assert from_cycles("(1 2)", 4) == (0, 2, 1, 3)
        assert from_cycles("()", 3) == (0, 1, 2)

    def test_parse_rejects_garbage(self):
        with pytest.raises(ParseError):
            from_cycles("(0 1")
        with pytest.raises(ParseError):
            from_cycles("(0 1)(1 2)")
        with pytest.raises(ParseError):
            from_cycles("(0 9)", 4)

    def test_chain_is_left_to_right(self):
        p = (1, 2, 0)
        q = (0, 2, 1)
        assert chain(p, q) == tuple(q[p[x]] for x in range(3))

    def test_inverse(self):
        p = from_cycles("(0 3 1)(2 4)")
        assert chain(p, inverse(p)) == identity(5)

    def test_cycles_sorted(self):
        assert cycles(from_cycles("(2 4)(0 3 1)")) == [(0, 3, 1), (2, 4)]


class TestValidation:
    def test_plane_example_valid(self):
        m = plane_map().validate()
        assert m.genus() == 0
        assert cycle_lengths(m.phi) == [3, 5, 4]

    def test_torus_example_valid(self):
        m = torus_map().validate()
        assert m.genus() == 1

    def test_composition_must_close(self):
        m = Hypermap(from_cycles("(0 1 2)"), identity(3), identity(3))
        with pytest.raises(CompositionMismatch):
            m.validate()

    def test_sizes_must_agree(self):
        m = Hypermap(identity(3), identity(4), identity(3))
        with pytest.raises(SizeMismatch):
            m.validate()

    def test_disconnected_detected(self):
        m = Hypermap.from_pair("(0 1)", "(2 3)", 4)
        with pytest.raises(Disconnected):
            m.validate()

    def test_negative_genus_rejected(self):
        with pytest.raises(NonIntegerGenus):
            Hypermap(identity(2), identity(2), identity(2)).genus()

    @settings(max_examples=60)
    @given(random_hypermaps())
    def test_from_pair_always_closes(self, m):
        assert chain(m.sigma, m.alpha, m.phi) == identity(m.n)


class TestDual:
    def test_torus_dual_matches_hand_computation(self):
        d = torus_map().dual()
        assert d.sigma == from_cycles("(0 4 2)(1 5 3)", 6)
        assert d.alpha == torus_map().alpha
        d.validate()

    @settings(max_examples=40)
    @given(random_hypermaps())
    def test_dual_involution_and_genus(self, m):
        try:
            m.validate()
        except Disconnected:
            return
        assert m.dual().dual() == m
        assert m.dual().genus() == m.genus()


class TestRefinement:
    def test_counts_plane(self):
        m = plane_map()
        t = tripartite_refinement(m)
        # one vertex per sigma-cycle, alpha-cycle, and phi-cycle
        assert t.num_vertices() == 5 + 6 + 3
        assert t.n == 6 * m.n
        assert t.genus() == 0
        assert len(cycles(t.phi)) == 2 * m.n

    def test_counts_torus(self):
        t = tripartite_refinement(torus_map())
        assert t.num_vertices() == 1 + 3 + 2
        assert t.genus() == 1

    def test_face_center_degree_doubles_face_length(self):
        m = plane_map()
        t = tripartite_refinement(m)
        face_lengths = sorted(cycle_lengths(m.phi))
        red = [
            len(cyc)
            for cyc, cls in zip(cycles(t.sigma), t.vertex_classes)
            if cls == 2
        ]
        assert sorted(red) == sorted(2 * k for k in face_lengths)

    def test_black_and_white_degrees_double(self):
        m = torus_map()
        t = tripartite_refinement(m)
        black = [
            len(cyc)
            for cyc, cls in zip(cycles(t.sigma), t.vertex_classes)
            if cls == 0
        ]
        assert sorted(black) == sorted(2 * k for k in cycle_lengths(m.sigma))

    @settings(max_examples=30, deadline=None)
    @given(random_hypermaps(8))
    def test_refinement_preserves_genus(self, m):
        try:
            m.validate()
        except Disconnected:
            return
        t = tripartite_refinement(m)
        assert t.genus() == m.genus()
        assert t.vertex_classes is not None


class TestSubdivision:
    def test_counts_torus(self):
        t = tripartite_refinement(torus_map())
        s = subdivide(t)
        v, e, f = t.num_vertices(), t.n // 2, len(cycles(t.phi))
        assert s.num_vertices() == v + e
        assert s.n // 2 == 2 * e + 3 * f
        assert len(cycles(s.phi)) == 4 * f
        assert s.genus() == 1

    def test_one_vertex_torus_with_loops(self):
        # vertex-level gluing would be ambiguous here; dart-level is not
        t = Triangulation(
            from_cycles(TORUS_SIGMA, 6),
            from_cycles(TORUS_ALPHA, 6),
            from_cycles(TORUS_PHI, 6),
        ).validate()
        s = subdivide(t)
        assert s.num_vertices() == 1 + 3
        assert s.n == 24
        assert len(cycles(s.phi)) == 8
        assert s.genus() == 1

    def test_classes_follow_missing_color(self):
        t = tripartite_refinement(plane_map())
        s = subdivide(t).validate()
        assert s.vertex_classes is not None
        s2 = subdivide(s).validate()
        assert s2.genus() == 0

    def test_rejects_non_triangulation(self):
        m = plane_map()  # valid map, but has a 5-gon and a 4-gon face
        t = Triangulation(m.sigma, m.alpha, m.phi)
        with pytest.raises(NotATriangulation):
            subdivide(t)


class TestIsomorphism:
    @settings(max_examples=40)
    @given(random_hypermaps(8), st.randoms())
    def test_relabeling_is_isomorphic(self, m, rng):
        try:
            m.validate()
        except Disconnected:
            return
        mapping = list(range(m.n))
        rng.shuffle(mapping)
        m2 = relabel(m, mapping)
        flag, witness = are_isomorphic(m, m2, with_witness=True)
        assert flag
        moved = relabel(m, witness)
        assert (moved.sigma, moved.alpha, moved.phi) == (m2.sigma, m2.alpha, m2.phi)

    def test_different_passports_not_isomorphic(self):
        m1 = Hypermap.from_pair("(0 1 2)", "(0 1)", 3)
        m2 = Hypermap.from_pair("(0 1)(2)", "(0 2)", 3)
        assert not are_isomorphic(m1, m2)

    def test_size_mismatch_not_isomorphic(self):
        assert not are_isomorphic(torus_map(), plane_map())

    def test_torus_self(self):
        flag, witness = are_isomorphic(torus_map(), torus_map(), with_witness=True)
        assert flag and witness[0] == 0
