import pytest
from mpmath import mp, mpc, mpf, exp, fabs

import mpmath

from belyi.constellation import (
    Constellation,
    SolverState,
    Star,
    evaluate_f,
    normalize_lambda,
    phi_residual,
    unknown_vector,
    with_unknowns,
)
from belyi.errors import (
    DegenerateState,
    MaxIterations,
    NotConverged,
    WrongGenus,
)
from belyi.elliptic import reduce_modulus
from belyi.hypermap import Hypermap, tripartite_refinement
from belyi.packing import initial_state
from belyi.solver import (
    _rechart_modulus,
    assemble_jacobian,
    determinant_crosscheck,
    escalate_precision,
    newton_solve,
    renormalize_chart,
)

PREC = 200


def cube_state(prec=PREC):
    """f(z) = z^3: zero of order 3 at 0, simple ones at the cube roots of 1."""
    with mp.workprec(prec):
        w = exp(2j * mp.pi / 3)
        c = Constellation(
            zeros=(Star(mpc(0), 3),),
            ones=(Star(mpc(1), 1), Star(w, 1), Star(w**2, 1)),
            poles=(Star(None, 3),),
        )
        return SolverState(0, mpc(1), None, c, prec)


def cubic_shabat_state(prec=PREC):
    """f(z) = 3z^2 - 2z^3 = -2 z^2 (z - 3/2); f - 1 = -(z-1)^2 (2z+1)."""
    with mp.workprec(prec):
        c = Constellation(
            zeros=(Star(mpc(0), 2), Star(mpc("1.5"), 1)),
            ones=(Star(mpc(1), 2), Star(mpc("-0.5"), 1)),
            poles=(Star(None, 3),),
        )
        return SolverState(0, mpc(-2), None, c, prec)


def quartic_rational_state(prec):
    """Signature (2,2 | 3,1 | 3,1) at generic locations; not a solution,
    only the chart and derivatives matter."""
    with mp.workprec(prec):
        c = Constellation(
            zeros=(Star(mpc(0), 2), Star(mpc("0.8", "0.3"), 2)),
            ones=(Star(mpc(1), 3), Star(mpc("0.5", "-0.9"), 1)),
            poles=(Star(None, 3), Star(mpc("-1.1", "0.7"), 1)),
        )
        return SolverState(0, mpc("1.3", "-0.2"), None, c, prec)


def torus_sextic_state(prec):
    """Signature (6 | 2,2,2 | 3,3) at generic locations on the sum loci."""
    with mp.workprec(prec):
        tau = mpc("0.05", "1.1")
        p2 = mpc("0.31", "0.44")
        c = Constellation(
            zeros=(Star(mpc(0), 6),),
            ones=(
                Star(mpc("0.52", "0.1"), 2),
                Star(mpc("0.11", "0.6"), 2),
                Star(mpc("0.67", "0.72"), 2),
            ),
            poles=(Star(-p2, 3), Star(p2, 3)),
        )
        return SolverState(1, mpc(2), tau, c, prec)


def torus_quintic_state(prec, sum_class=(0, 0)):
    """Signature (2,3 | 3,2 | 5) at generic locations, with a free zero and
    the single pole derived from the frozen class."""
    with mp.workprec(prec):
        tau = mpc("0.12", "0.93")
        m_cls, n_cls = sum_class
        z2 = mpc("0.27", "0.41")
        c = Constellation(
            zeros=(Star(-3 * z2 / 2, 2), Star(z2, 3)),
            ones=(Star(mpc("0.61", "0.13"), 3), Star(mpc("0.07", "0.66"), 2)),
            poles=(Star(-(m_cls + n_cls * tau) / 5, 5),),
        )
        return SolverState(1, mpc("0.9", "0.4"), tau, c, prec, sum_class=sum_class)


def finite_difference_jacobian(state, h_exponent):
    """Independent column-by-column central differences through the chart."""
    x = unknown_vector(state)
    n = len(x)
    cols = []
    with mp.workprec(state.precision_bits + 32):
        for k in range(n):
            h = mpf(2) ** h_exponent * (1 + abs(x[k]))
            up = list(x)
            up[k] = x[k] + h
            down = list(x)
            down[k] = x[k] - h
            rp = phi_residual(with_unknowns(state, up))
            rm = phi_residual(with_unknowns(state, down))
            cols.append([(a - b) / (2 * h) for a, b in zip(rp, rm)])
    return cols


def perturbed(state, eps):
    """Shift every free coordinate by a fixed generic complex multiple of eps."""
    x = unknown_vector(state)
    with mp.workprec(state.precision_bits):
        bump = mpc("1.0", "0.7") * mpf(eps)
        return with_unknowns(state, [xi + bump * (1 + i) / len(x) for i, xi in enumerate(x)])


def shabat_sextic_seeds():
    """Hand-placed seeds for two different degree-6 plane trees sharing the
    passport (2,2,1,1 | 3,2,1 | 6).  Their refinements have degree-2 interior
    vertices (the simple stars), which a euclidean packing cannot seed, so the
    locations come straight from sketches of the two trees."""

    def seed(zs, os_):
        c = Constellation(
            zeros=tuple(Star(mpc(*z), d) for z, d in zs),
            ones=tuple(Star(mpc(*o), d) for o, d in os_),
            poles=(Star(None, 6),),
        )
        return normalize_lambda(SolverState(0, mpc(1), None, c, 53))

    with mp.workprec(60):
        sa = seed(
            [((0, 0), 2), ((2, "0.1"), 2), (("1.1", "1.0"), 1), ((-2, "-0.1"), 1)],
            [((1, 0), 3), ((-1, "0.05"), 2), ((3, 0), 1)],
        )
        sb = seed(
            [((0, 0), 2), ((-2, "0.1"), 2), (("1.6", "0.9"), 1), (("1.7", "-0.8"), 1)],
            [((1, 0), 3), ((-1, "0.05"), 2), ((-3, 0), 1)],
        )
    return sa, sb


S21_SIGMA = "(0 7 10 4)(1 9 6 3 11 8 5 2)"
S23_SIGMA = "(0 7 8 5 2 1 9 10 4)(3 11 6)"
PAIRING_12 = "(0 1)(2 3)(4 5)(6 7)(8 9)(10 11)"


def torus_seed(sigma, level=0):
    hm = Hypermap.from_pair(sigma, PAIRING_12)
    return initial_state(tripartite_refinement(hm), level, 1)


class TestJacobianColumns:
    @pytest.mark.parametrize(
        "builder",
        [
            lambda: perturbed(cubic_shabat_state(53), "1e-2"),
            lambda: quartic_rational_state(53),
            lambda: torus_sextic_state(53),
            lambda: torus_quintic_state(53),
            lambda: torus_quintic_state(53, sum_class=(1, 1)),
        ],
    )
    def test_matches_finite_differences_double(self, builder):
        state = builder()
        jac = assemble_jacobian(state)
        # the residual runs 32 guard bits past the state precision, so the
        # central-difference sweet spot sits near 2^-28, not 2^-18
        fd = finite_difference_jacobian(state, -28)
        n = jac.entries.rows
        with mp.workprec(state.precision_bits + 32):
            for j in range(n):
                col = [jac.entries[i, j] for i in range(n)]
                diff = max(abs(a - b) for a, b in zip(col, fd[j]))
                scale = max(mpf(1), max(abs(a) for a in col))
                if jac.col_labels[j] == "tau":
                    # the tau column is itself a difference quotient with a
                    # precision-tied step, so at 53 bits it only carries
                    # about seven digits; the tight bound is for the
                    # analytic columns
                    assert diff / scale < mpf("1e-5"), jac.col_labels[j]
                else:
                    assert diff / scale < mpf("1e-8"), jac.col_labels[j]

    @pytest.mark.parametrize(
        "builder",
        [
            lambda: quartic_rational_state(350),
            lambda: torus_sextic_state(350),
            lambda: torus_quintic_state(350, sum_class=(1, 1)),
        ],
    )
    def test_matches_finite_differences_high(self, builder):
        state = builder()
        jac = assemble_jacobian(state)
        fd = finite_difference_jacobian(state, -117)
        n = jac.entries.rows
        with mp.workprec(state.precision_bits + 32):
            for j in range(n):
                col = [jac.entries[i, j] for i in range(n)]
                diff = max(abs(a - b) for a, b in zip(col, fd[j]))
                scale = max(mpf(1), max(abs(a) for a in col))
                assert diff / scale < mpf("1e-30"), jac.col_labels[j]

    def test_lambda_column_pattern_at_exact_state(self):
        st = cubic_shabat_state()
        jac = assemble_jacobian(st)
        k = jac.col_labels.index("lam")
        with mp.workprec(PREC):
            tol = mpf(2) ** (-PREC + 24)
            # rows are (f(o1)-1, f'(o1), f(o2)-1); d_lam f = f/lam kills the
            # derivative slot at an exact state
            assert fabs(jac.entries[0, k] - 1 / st.lam) < tol
            assert fabs(jac.entries[1, k]) < tol
            assert fabs(jac.entries[2, k] - 1 / st.lam) < tol

    def test_exact_cube_jacobian_nonsingular(self):
        jac = assemble_jacobian(cube_state())
        with mp.workprec(PREC):
            assert fabs(mpmath.det(jac.entries)) > mpf("0.1")

    def test_labels_cover_chart(self):
        st = torus_sextic_state(100)
        jac = assemble_jacobian(st)
        assert jac.col_labels[0] == "tau"
        assert jac.col_labels[1] == "lam"
        assert len(jac.col_labels) == len(unknown_vector(st))
        assert len(jac.row_labels) == len(phi_residual(st))

    def test_holomorphy_defect_small(self):
        jac = assemble_jacobian(torus_sextic_state(100))
        assert jac.holomorphy_defect is not None
        assert jac.holomorphy_defect < 1e-12

    def test_colliding_zeros_rejected(self):
        with mp.workprec(100):
            c = Constellation(
                zeros=(Star(mpc(0), 2), Star(mpc(mpf(2) ** -90), 1)),
                ones=(Star(mpc(1), 2), Star(mpc("-0.5"), 1)),
                poles=(Star(None, 3),),
            )
            st = SolverState(0, mpc(-2), None, c, 100)
        with pytest.raises(DegenerateState):
            assemble_jacobian(st)


class TestNewton:
    def test_exact_cube_is_fixed_point(self):
        rep = newton_solve(cube_state())
        assert rep.converged
        assert rep.iterations <= 1
        with mp.workprec(PREC):
            assert rep.final_residual_norm < mpf(2) ** (-PREC + 16)

    def test_perturbed_cubic_reconverges_quadratically(self):
        seed = perturbed(cubic_shabat_state(), "1e-4")
        rep = newton_solve(seed)
        assert rep.converged
        with mp.workprec(PREC):
            target = cubic_shabat_state()
            got = unknown_vector(rep.state)
            want = unknown_vector(target)
            assert max(fabs(a - b) for a, b in zip(got, want)) < mpf("1e-40")
            floor = mpf(2) ** (-PREC + 40)
            hist = rep.residual_history
            checked = 0
            for r0, r1 in zip(hist, hist[1:]):
                if r1 > floor and r0 < mpf("0.1"):
                    assert r1 <= 10 * r0**2
                    checked += 1
            assert checked >= 2

    def test_torus_seed_converges_to_square_modulus(self):
        # the 12-dart torus dessin whose curve has j = 1728, so the reduced
        # modulus is i
        rep = newton_solve(torus_seed(S21_SIGMA))
        assert rep.converged
        with mp.workprec(60):
            tau = rep.state.tau
            assert fabs(tau - mpc(0, 1)) < mpf("1e-13")

    def test_frozen_class_dessin_converges(self):
        # zero orders (9,3) and pole orders (3,3,3,3) share gcd 3 and the
        # packed class is not divisible by it, so this dessin forces the
        # exponential compensation path
        seed = torus_seed(S23_SIGMA)
        assert seed.sum_class != (0, 0)
        rep = newton_solve(seed)
        assert rep.converged
        st = rep.state
        with mp.workprec(80):
            m_cls, n_cls = st.sum_class
            dz = sum(s.multiplicity * s.location for s in st.constellation.zeros)
            dp = sum(s.multiplicity * s.location for s in st.constellation.poles)
            assert fabs(dz) < mpf("1e-12")
            assert fabs(dz - dp - (m_cls + n_cls * st.tau)) < mpf("1e-12")

    def test_genus0_normalization_preserved(self):
        rep = newton_solve(perturbed(cubic_shabat_state(), "1e-3"))
        c = rep.state.constellation
        assert c.zeros[0].location == 0
        assert c.ones[0].location == 1
        assert c.poles[0].location is None

    def test_max_iterations_carries_report(self):
        seed = perturbed(cubic_shabat_state(), "1e-2")
        with pytest.raises(MaxIterations) as info:
            newton_solve(seed, max_iter=1)
        rep = info.value.report
        assert not rep.converged
        assert rep.iterations == 1
        assert len(rep.residual_history) >= 1

    def test_degenerate_seed_rejected(self):
        with mp.workprec(100):
            c = Constellation(
                zeros=(Star(mpc(0), 2), Star(mpc(mpf(2) ** -90), 1)),
                ones=(Star(mpc(1), 2), Star(mpc("-0.5"), 1)),
                poles=(Star(None, 3),),
            )
            seed = SolverState(0, mpc(-2), None, c, 100)
        with pytest.raises(DegenerateState):
            newton_solve(seed)


class TestRechartAndEscalation:
    def test_rechart_preserves_function(self):
        base = torus_quintic_state(120, sum_class=(1, 1))
        shifted = with_unknowns(
            base, [unknown_vector(base)[0] + 1] + unknown_vector(base)[1:]
        )
        red = _rechart_modulus(shifted)
        with mp.workprec(120):
            assert fabs(mp.re(red.tau)) <= mpf("0.5") + mpf("1e-20")
            # the reduction scales the torus coordinate by u = 1/(c tau + d)
            _, (_, _, cc, dd) = reduce_modulus(shifted.tau)
            u = 1 / (cc * shifted.tau + dd)
            for w in (mpc("0.4", "0.2"), mpc("0.15", "0.55")):
                a = evaluate_f(shifted, w)
                b = evaluate_f(red, u * w)
                assert fabs(a - b) < mpf("1e-25") * max(1, fabs(a))

    def test_escalate_idempotent_at_same_precision(self):
        rep = newton_solve(cube_state(100))
        again = escalate_precision(rep, 100)
        assert again is rep

    def test_escalate_requires_convergence(self):
        seed = perturbed(cubic_shabat_state(), "1e-2")
        with pytest.raises(MaxIterations) as info:
            newton_solve(seed, max_iter=1)
        with pytest.raises(NotConverged):
            escalate_precision(info.value.report, 300)

    def test_escalate_reaches_target_residual(self):
        rep = newton_solve(cube_state(53))
        high = escalate_precision(rep, 350)
        assert high.state.precision_bits == 350
        with mp.workprec(360):
            assert high.final_residual_norm < mpf(2) ** (-320)

    def test_escalated_torus_modulus_digits(self):
        rep = newton_solve(torus_seed(S21_SIGMA))
        high = escalate_precision(rep, 300)
        with mp.workprec(300):
            assert fabs(high.state.tau - mpc(0, 1)) < mpf(10) ** -80


class TestRenormalizeChart:
    def test_repin_moves_simple_zero_to_origin(self):
        old = cubic_shabat_state()
        new = renormalize_chart(old, zero_index=1, one_index=1)
        with mp.workprec(PREC):
            # the Mobius map here is w -> (w - 3/2) / (-1/2 - 3/2)
            assert new.constellation.zeros[0].location == 0
            assert new.constellation.zeros[0].multiplicity == 1
            assert fabs(new.constellation.zeros[1].location - mpf("0.75")) < mpf("1e-50")
            assert new.constellation.ones[0].location == 1
            assert fabs(new.constellation.ones[1].location - mpf("0.25")) < mpf("1e-50")
            assert new.constellation.poles[0].location is None
            assert max(fabs(r) for r in phi_residual(new)) < mpf("1e-45")
            for w in (mpc("0.3", "0.4"), mpc("-1.2", "0.1")):
                img = (w - mpf("1.5")) / -2
                assert fabs(evaluate_f(new, img) - evaluate_f(old, w)) < mpf("1e-45")

    def test_repin_finite_pole_roundtrip(self):
        # f = z^2 / (2z - 1) swaps its two poles under w -> w / (2w - 1),
        # so sending the finite pole to infinity lands on the same chart
        with mp.workprec(PREC):
            c = Constellation(
                zeros=(Star(mpc(0), 2),),
                ones=(Star(mpc(1), 2),),
                poles=(Star(None, 1), Star(mpc("0.5"), 1)),
            )
            old = SolverState(0, mpc("0.5"), None, c, PREC)
            new = renormalize_chart(old, pole_index=1)
            assert new.constellation.poles[0].location is None
            assert fabs(new.constellation.poles[1].location - mpf("0.5")) < mpf("1e-50")
            assert fabs(new.lam - mpf("0.5")) < mpf("1e-50")
            assert max(fabs(r) for r in phi_residual(new)) < mpf("1e-45")

    def test_genus_one_rejected(self):
        with pytest.raises(WrongGenus):
            renormalize_chart(torus_sextic_state(100))


class TestDeterminantCrosscheck:
    def test_cubic_shabat_closed_form(self):
        # hand evaluation of the 3x3 log-form system for 3z^2 - 2z^3:
        # det = 9, det * lam * den / num = -9/2, and the free-one pivot is
        # g'(-1/2) = f'(-1/2) = -9/2, so the signature constant is 1
        det, ratio = determinant_crosscheck(cubic_shabat_state())
        with mp.workprec(PREC):
            assert fabs(det - 9) < mpf("1e-40")
            assert fabs(ratio - 1) < mpf("1e-40")

    def test_ratio_stable_under_precision_doubling(self):
        _, r1 = determinant_crosscheck(cubic_shabat_state(150))
        _, r2 = determinant_crosscheck(cubic_shabat_state(300))
        with mp.workprec(310):
            assert fabs(r1 - r2) < mpf(10) ** -12

    def test_distinct_trees_share_signature_constant(self):
        ratios = []
        charts = []
        for s in shabat_sextic_seeds():
            rep = escalate_precision(newton_solve(s, max_iter=60), 150)
            det, ratio = determinant_crosscheck(rep.state)
            with mp.workprec(160):
                assert fabs(det) > mpf(10) ** -30
                assert fabs(ratio) > mpf(10) ** -20
            ratios.append(ratio)
            charts.append(unknown_vector(rep.state))
        with mp.workprec(160):
            # the two runs landed on genuinely different functions ...
            assert max(fabs(p - q) for p, q in zip(*charts)) > mpf("0.5")
            # ... yet the det-to-product quotient is the same constant
            assert fabs(ratios[0] - ratios[1]) < mpf(10) ** -30 * fabs(ratios[0])

    def test_wrong_genus_rejected(self):
        with pytest.raises(WrongGenus):
            determinant_crosscheck(torus_sextic_state(100))

    def test_unconverged_state_rejected(self):
        with pytest.raises(NotConverged):
            determinant_crosscheck(perturbed(cubic_shabat_state(), "1e-2"))
