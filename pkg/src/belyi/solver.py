"""Newton iteration on constellation space.

The residual and its lambda/location partials are closed-form Leibniz
ladders over log-derivative kernels; only the modulus column of a genus-1
system uses finite differences.  Convergence requires small residual and
small step together; a step that increases the residual is retried at half
length (twice at most), and three non-improving iterations in a row abort
the solve.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from math import comb
from typing import Optional

import mpmath
from mpmath import lu_solve, matrix, mp, mpc, mpf

from . import elliptic
from .constellation import (
    Constellation,
    SolverState,
    Star,
    check_degenerate,
    evaluate_f,
    f_derivatives,
    finite_poles,
    log_derivatives,
    normalize_lambda,
    phi_residual,
    unknown_vector,
    with_unknowns,
)
from .elliptic import PoleAtLatticePoint
from .errors import (
    DegenerateState,
    Diverged,
    EvaluationAtPole,
    EvaluationAtSingularity,
    MaxIterations,
    NotConverged,
    SingularJacobian,
    WrongGenus,
)

#: minimum distance of the modulus from the real axis before a genus-1
#: solve is declared lost
MIN_TAU_IMAG = 1e-3

#: ceiling on Im tau for trial steps; theta evaluation cost explodes with
#: the cell height, and no dessin modulus gets anywhere near this
MAX_TAU_IMAG = 1e3

#: largest relative change any chart coordinate may make in one iteration
MAX_REL_STEP = 2


@dataclass(frozen=True)
class JacobianMatrix:
    """Square system matrix with labeling metadata.

    holomorphy_defect is the relative disagreement between the real- and
    imaginary-direction finite differences of the modulus column (genus 1
    only); a large value flags an untrustworthy tau derivative.
    """

    entries: matrix
    row_labels: tuple[str, ...]
    col_labels: tuple[str, ...]
    holomorphy_defect: Optional[float] = None


@dataclass(frozen=True)
class NewtonReport:
    converged: bool
    iterations: int
    final_residual_norm: mpf
    residual_history: tuple[mpf, ...]
    state: SolverState


def _inf_norm(vec) -> mpf:
    return max([mpf(0)] + [abs(x) for x in vec])


def _power_kernel(weight, diff, order):
    """[(d/dw)^l (weight/(w-x))] evaluated with diff = w - x."""
    out = []
    sign = 1
    fact = 1
    for ell in range(order + 1):
        out.append(weight * sign * fact / diff ** (ell + 1))
        sign = -sign
        fact *= ell + 1
    return out


def _leibniz_column(fs, kernels, orders):
    """Entries sum_m C(k,m) f^(m)(o_i) h^(k-m)(o_i) stacked over the row
    blocks; fs[i] and kernels[i] are the ladders at the i-th one-star."""
    col = []
    for i, top in enumerate(orders):
        for k in range(top):
            col.append(
                sum(comb(k, m) * fs[i][m] * kernels[i][k - m] for m in range(k + 1))
            )
    return col


def _tau_residual(state: SolverState, tau):
    # go through the chart so the derived p1 follows its tau dependence
    vec = unknown_vector(state)
    vec[0] = tau
    return phi_residual(with_unknowns(state, vec))


def _rechart_modulus(state: SolverState) -> SolverState:
    """Pull the modulus back into the fundamental domain.

    An iterate that wanders to an equivalent but thin lattice makes the
    sigma evaluations explode, so rewrite the same function in the reduced
    chart: tau -> (a tau + b)/(c tau + d), every star location scaled by
    1/(c tau + d), and lam recomputed to leave f(o_1) unchanged.
    """
    if state.genus != 1:
        return state
    con = state.constellation
    with mp.workprec(state.precision_bits + elliptic.GUARD_BITS):
        tau_red, (a, b, c, d) = elliptic.reduce_modulus(state.tau)
        if (a, b, c, d) == (1, 0, 0, 1):
            return state
        u = 1 / (c * state.tau + d)
        f_o1 = evaluate_f(state, con.ones[0].location)
        new_con = Constellation(
            tuple(Star(u * s.location, s.multiplicity) for s in con.zeros),
            tuple(Star(u * s.location, s.multiplicity) for s in con.ones),
            tuple(Star(u * s.location, s.multiplicity) for s in con.poles),
        )
        # the divisor sum scales by u, which carries its lattice coordinates
        # through the same basis change as tau
        m_cls, n_cls = state.sum_class
        cls_red = (a * m_cls - b * n_cls, d * n_cls - c * m_cls)
        cand = replace(
            state, tau=tau_red, constellation=new_con, lam=mpc(1), sum_class=cls_red
        )
        lam = f_o1 / evaluate_f(cand, new_con.ones[0].location)
        return replace(cand, lam=lam)


def assemble_jacobian(state: SolverState) -> JacobianMatrix:
    """Partial derivatives of the residual with respect to the chart.

    Columns follow unknown_vector: (lam, z2.., p2.., o2..) in genus 0 and
    (tau, lam, z2.., p2.., all o) in genus 1.  Location and lambda columns
    are analytic; the tau column is a central finite difference with the
    imaginary-direction value kept as a cross-check.
    """
    check_degenerate(state)
    c = state.constellation
    genus = state.genus
    with mp.workprec(state.precision_bits + elliptic.GUARD_BITS):
        ctx = state.lattice_ctx() if genus == 1 else None
        ones = c.ones
        orders = [s.multiplicity for s in ones]
        row_labels = []
        for i, s in enumerate(ones):
            row_labels.append(f"o{i + 1}: f - 1")
            row_labels += [f"o{i + 1}: f^({k})" for k in range(1, s.multiplicity)]
        n = len(row_labels)
        try:
            fs = [
                f_derivatives(state, s.location, s.multiplicity, ctx) for s in ones
            ]
        except (EvaluationAtPole, EvaluationAtSingularity) as exc:
            raise DegenerateState(f"a one-star sits on a zero or pole: {exc}") from exc

        cols: list[list[mpc]] = []
        col_labels: list[str] = []
        defect = None

        if genus == 1:
            h = mpf(2) ** (-(state.precision_bits // 3)) * (1 + abs(state.tau))
            rp = _tau_residual(state, state.tau + h)
            rm = _tau_residual(state, state.tau - h)
            col_re = [(a - b) / (2 * h) for a, b in zip(rp, rm)]
            rp = _tau_residual(state, state.tau + 1j * h)
            rm = _tau_residual(state, state.tau - 1j * h)
            col_im = [(a - b) / (2j * h) for a, b in zip(rp, rm)]
            scale = max(mpf(1), _inf_norm(col_re))
            defect = float(
                max(abs(a - b) for a, b in zip(col_re, col_im)) / scale
            )
            cols.append(col_re)
            col_labels.append("tau")

        cols.append([fs[i][k] / state.lam for i, top in enumerate(orders) for k in range(top)])
        col_labels.append("lam")

        if genus == 0:
            for j, s in enumerate(c.zeros):
                if j == 0:
                    continue
                kers = [
                    _power_kernel(-s.multiplicity, o.location - s.location, top - 1)
                    for o, top in zip(ones, orders)
                ]
                cols.append(_leibniz_column(fs, kers, orders))
                col_labels.append(f"z{j + 1}")
            for j, s in enumerate(c.poles):
                if j == 0:
                    continue
                kers = [
                    _power_kernel(s.multiplicity, o.location - s.location, top - 1)
                    for o, top in zip(ones, orders)
                ]
                cols.append(_leibniz_column(fs, kers, orders))
                col_labels.append(f"p{j + 1}")
        else:
            try:
                zl = [
                    [
                        elliptic.zeta_derivatives(ctx, o.location - s.location, top - 1)
                        for s in c.zeros
                    ]
                    for o, top in zip(ones, orders)
                ]
                pl = [
                    [
                        elliptic.zeta_derivatives(ctx, o.location - s.location, top - 1)
                        for s in c.poles
                    ]
                    for o, top in zip(ones, orders)
                ]
            except PoleAtLatticePoint as exc:
                raise DegenerateState(
                    f"a one-star sits on a zero or pole: {exc}"
                ) from exc
            # z1 and p1 are derived from the free locations by the zero-sum
            # normalization, so each column picks up a chain-rule term
            for j, s in enumerate(c.zeros):
                if j == 0:
                    continue
                kers = [
                    [
                        s.multiplicity * (zl[i][0][ell] - zl[i][j][ell])
                        for ell in range(top)
                    ]
                    for i, top in enumerate(orders)
                ]
                cols.append(_leibniz_column(fs, kers, orders))
                col_labels.append(f"z{j + 1}")
            for j, s in enumerate(c.poles):
                if j == 0:
                    continue
                kers = [
                    [
                        s.multiplicity * (pl[i][j][ell] - pl[i][0][ell])
                        for ell in range(top)
                    ]
                    for i, top in enumerate(orders)
                ]
                cols.append(_leibniz_column(fs, kers, orders))
                col_labels.append(f"p{j + 1}")

        first_free_one = 1 if genus == 0 else 0
        for j in range(first_free_one, len(ones)):
            col = [mpc(0)] * n
            base = sum(orders[:j])
            for k in range(orders[j]):
                col[base + k] = fs[j][k + 1]
            cols.append(col)
            col_labels.append(f"o{j + 1}")

        if len(cols) != n:
            raise WrongGenus(
                f"chart has {len(cols)} coordinates but {n} residual rows"
            )
        m = matrix(n, n)
        for cj, col in enumerate(cols):
            for ri, val in enumerate(col):
                m[ri, cj] = val
        return JacobianMatrix(m, tuple(row_labels), tuple(col_labels), defect)


def newton_solve(seed: SolverState, tol=None, max_iter: int = 40) -> NewtonReport:
    """Iterate x -> x - J^(-1) Phi(x) from the seed.

    Convergence needs residual norm and step norm both below tol (default
    2^(-precision+12)).  Raises SingularJacobian, Diverged (three
    non-improving iterations, colliding stars, or a collapsing modulus),
    or MaxIterations, the last carrying the partial report in .report.
    """
    prec = seed.precision_bits
    with mp.workprec(prec + elliptic.GUARD_BITS):
        tol = mpf(2) ** (-prec + 12) if tol is None else mpf(tol)
        state = seed
        history: list[mpf] = []
        increases = 0
        rnew = None
        for it in range(1, max_iter + 1):
            state = _rechart_modulus(state)
            resid = phi_residual(state)
            rnorm = _inf_norm(resid)
            history.append(rnorm)
            jac = assemble_jacobian(state)
            n = jac.entries.rows
            # equilibrate columns: lam alone can sit many orders of
            # magnitude off the location columns
            scales = []
            m = matrix(n, n)
            for j in range(n):
                s = max(abs(jac.entries[i, j]) for i in range(n))
                s = s if s > 0 else mpf(1)
                scales.append(s)
                for i in range(n):
                    m[i, j] = jac.entries[i, j] / s
            try:
                y = lu_solve(m, matrix([-r for r in resid]))
            except ZeroDivisionError as exc:
                raise SingularJacobian(
                    f"system matrix numerically singular at iteration {it}"
                ) from exc
            step = [y[j] / scales[j] for j in range(n)]
            x = unknown_vector(state)
            snorm = max(
                abs(s) / max(mpf(1), abs(xi)) for s, xi in zip(step, x)
            )
            if snorm > MAX_REL_STEP:
                damp = MAX_REL_STEP / snorm
                step = [s * damp for s in step]

            def try_step(s):
                cand = with_unknowns(state, [xi + si for xi, si in zip(x, s)])
                if cand.genus == 1 and not (
                    MIN_TAU_IMAG < mp.im(cand.tau) < MAX_TAU_IMAG
                ):
                    # treat like a failed step so the halving loop can back off
                    return cand, mp.inf
                try:
                    return cand, _inf_norm(phi_residual(cand))
                except (EvaluationAtPole, EvaluationAtSingularity):
                    return cand, mp.inf
                except (OverflowError, ValueError):
                    # theta series breakdown on a nearly collapsed lattice
                    return cand, mp.inf

            cand, rnew = try_step(step)
            halvings = 0
            while rnew > rnorm and halvings < 8:
                step = [s / 2 for s in step]
                cand, rnew = try_step(step)
                halvings += 1
            if not mp.isfinite(rnew):
                raise Diverged("step landed on a singular configuration")
            try:
                check_degenerate(cand, mpf(2) ** (-(prec // 2)))
            except DegenerateState as exc:
                raise Diverged(f"stars collided during iteration: {exc}") from exc
            if rnorm < tol and snorm < tol:
                history.append(rnew)
                return NewtonReport(True, it, rnew, tuple(history), cand)
            if rnew >= rnorm:
                increases += 1
                if increases >= 3:
                    raise Diverged(
                        f"residual rose three iterations running ({rnew} vs {rnorm})"
                    )
            else:
                increases = 0
            state = cand
        exc = MaxIterations(f"no convergence in {max_iter} iterations")
        exc.report = NewtonReport(
            False, max_iter, rnew, tuple(history), state
        )
        raise exc


def escalate_precision(report: NewtonReport, target_bits: int) -> NewtonReport:
    """Re-run Newton at doubling precisions up to target_bits.

    Quadratic convergence makes every stage cost O(1) iterations.  A report
    already at or beyond the target is returned unchanged.
    """
    if not report.converged:
        raise NotConverged("precision escalation needs a converged report")
    rep = report
    bits = rep.state.precision_bits
    while bits < target_bits:
        bits = min(2 * bits, target_bits)
        seed = replace(rep.state, precision_bits=bits)
        rep = newton_solve(seed, max_iter=15)
    return rep


def determinant_crosscheck(state: SolverState):
    """det of the log-form system matrix against the closed-form product.

    Returns (det_numeric, ratio) where ratio is det divided by

        (1/lam) * prod_{j>=2} g^(d_j)(o_j) * num / den

    and depends on the signature alone; num runs over pairwise differences
    of ones (with exponents dt_i * dt_j), free zeros, finite poles, and
    pole-zero pairs, den over (z - o_i)^dt_i and (p - o_i)^dt_i, with
    dt_i = d_i - 1 + [i == 1].  The g^(d_j)(o_j) factors are the pivots of
    the free-one rows, whose only nonzero entry sits in the last column of
    their block; without dividing them out the quotient still carries a
    state-dependent leading coefficient and is not constant on a signature.
    """
    if state.genus != 0:
        raise WrongGenus("the determinant identity is a genus-0 statement")
    c = state.constellation
    prec = state.precision_bits
    with mp.workprec(prec + elliptic.GUARD_BITS):
        if _inf_norm(phi_residual(state)) > mpf(2) ** (-(prec // 3)):
            raise NotConverged("determinant identity holds at converged states only")
        ones = c.ones
        orders = [s.multiplicity for s in ones]
        tilde = [d - 1 + (1 if i == 0 else 0) for i, d in enumerate(orders)]
        n = sum(orders)
        zs2 = [s for s in c.zeros[1:]]
        ps2 = finite_poles(c)

        m = matrix(n, n)
        col = 0

        def put(entries):
            nonlocal col
            for ri, val in enumerate(entries):
                m[ri, col] = val
            col += 1

        lam_col = []
        for top in orders:
            lam_col += [1 / state.lam] + [mpc(0)] * (top - 1)
        put(lam_col)
        for s in zs2:
            entries = []
            for o, top in zip(ones, orders):
                entries += _power_kernel(-s.multiplicity, o.location - s.location, top - 1)
            put(entries)
        for s in ps2:
            entries = []
            for o, top in zip(ones, orders):
                entries += _power_kernel(s.multiplicity, o.location - s.location, top - 1)
            put(entries)
        for j in range(1, len(ones)):
            gl = log_derivatives(state, ones[j].location, orders[j])
            entries = [mpc(0)] * n
            base = sum(orders[:j])
            for k in range(orders[j]):
                entries[base + k] = gl[k]
            put(entries)
        det_numeric = mpmath.det(m)

        num = mpc(1)
        for i in range(len(ones)):
            for j in range(i + 1, len(ones)):
                num *= (ones[j].location - ones[i].location) ** (tilde[i] * tilde[j])
        for i in range(len(zs2)):
            for j in range(i + 1, len(zs2)):
                num *= zs2[j].location - zs2[i].location
        for i in range(len(ps2)):
            for j in range(i + 1, len(ps2)):
                num *= ps2[j].location - ps2[i].location
        for z in zs2:
            for p in ps2:
                num *= p.location - z.location
        den = mpc(1)
        for o, dt in zip(ones, tilde):
            for z in zs2:
                den *= (z.location - o.location) ** dt
            for p in ps2:
                den *= (p.location - o.location) ** dt
        pivots = mpc(1)
        for j in range(1, len(ones)):
            gl = log_derivatives(state, ones[j].location, orders[j])
            pivots *= gl[-1]
        ratio = det_numeric * state.lam * den / (num * pivots)
        return det_numeric, ratio


def renormalize_chart(state: SolverState, zero_index: int = 0, one_index: int = 0,
                      pole_index: int = 0) -> SolverState:
    """Re-pin the genus-0 chart onto different stars of the same function.

    Builds the Mobius map carrying the chosen zero to 0, the chosen one to
    1, and the chosen pole to infinity, applies it to every star location,
    moves the chosen stars to the front of their tuples, and restores the
    value-1 normalization.  Identification reads chart coordinates as they
    are, so when a different pinning makes them algebraically simpler this
    produces that chart.  Intended for converged states; elsewhere the
    residual is only carried over approximately.
    """
    if state.genus != 0:
        raise WrongGenus("chart re-pinning is a genus-0 operation")
    c = state.constellation
    with mp.workprec(state.precision_bits + elliptic.GUARD_BITS):
        z = c.zeros[zero_index].location
        o = c.ones[one_index].location
        p = c.poles[pole_index].location

        def mob(w):
            if p is None:
                return None if w is None else (w - z) / (o - z)
            if w is None:
                return (o - p) / (o - z)
            if w == p:
                return None
            return (w - z) * (o - p) / ((w - p) * (o - z))

        def front(stars, index, pinned):
            moved = [Star(pinned, stars[index].multiplicity)]
            moved += [
                Star(mob(s.location), s.multiplicity)
                for i, s in enumerate(stars)
                if i != index
            ]
            return tuple(moved)

        new_c = Constellation(
            front(c.zeros, zero_index, mpc(0)),
            front(c.ones, one_index, mpc(1)),
            front(c.poles, pole_index, None),
        )
        return normalize_lambda(replace(state, constellation=new_c))
