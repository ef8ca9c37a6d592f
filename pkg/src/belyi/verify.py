"""Topological verification of a converged covering by path lifting.

The dessin of a covering f is the preimage of the segment [0, 1]: one edge
per sheet, running from a zero to a one.  Tracing those lifts numerically
and reading off the cyclic order of edge germs around the stars rebuilds
the combinatorial map the covering actually realizes, which either matches
the one the solve was aimed at or exposes a wrong branch.

Tracing works on a copy of the state dropped to 53 bits: the topology of a
converged state is stable at double precision, and the elliptic evaluations
dominate the cost.  Each of the N lifts starts just off a zero star, along
one of the d germ directions that the local model lam_d (z - a)^d sends
into the positive reals, and follows f(gamma(t)) = t by a tangent predictor
with a Newton corrector.  Lifts never meet a critical point on the way: the
critical values of a covering with our normalization all sit in {0, 1, oo},
so the open segment (0, 1) lifts to disjoint smooth arcs.

Cyclic orders are read counterclockwise, matching the face orientation the
packing layout fixes, and the face permutation is forced by the composition
law phi(alpha(sigma(x))) = x.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from math import atan2, cos, factorial, pi, sin
from typing import Optional

from mpmath import mp, mpc, mpf

from . import elliptic
from .constellation import SolverState, f_derivatives, finite_poles, phi_residual
from .errors import NotConverged, TracingStalled, WrongEndpointCount
from .hypermap import Hypermap, are_isomorphic

TRACE_BITS = 53
#: offsets from the segment endpoints where lifts start and stop
T_START = 1e-3
T_STOP = 1e-3
#: spatial step floor, as a fraction of the domain scale
STEP_FLOOR = 1e-6
STEP_CAP = 0.05
CORRECTOR_TOL = 1e-10
MAX_STEPS = 20000


@dataclass(frozen=True)
class TracedEdge:
    """One lift of a real segment, with its endpoints named by star.

    Star identifiers are ("zero", i) / ("one", j) / ("pole", k) index pairs
    into the constellation tuples.  The polyline starts and ends on the star
    locations themselves (on the torus: on the lattice translate the lift
    actually reached); interior samples satisfy f(z) in the open segment.
    """

    start_star: tuple[str, int]
    end_star: tuple[str, int]
    segment_class: str
    polyline: tuple[complex, ...]


@dataclass(frozen=True)
class _Dart:
    edge: TracedEdge
    zero_index: int
    zero_germ: int
    one_index: int
    one_germ: int


def _downcast(state: SolverState) -> SolverState:
    if state.precision_bits <= TRACE_BITS:
        return state
    return replace(state, precision_bits=TRACE_BITS)


def _require_converged(state: SolverState):
    norm = max(abs(r) for r in phi_residual(state))
    if norm > mpf(2) ** (-(state.precision_bits // 3)):
        raise NotConverged(f"tracing needs a converged state; residual {norm}")


def _domain_scale(state: SolverState) -> float:
    if state.genus == 1:
        return max(1.0, abs(complex(state.tau)))
    return float(state.scale())


def _min_star_gap(state: SolverState, ctx) -> float:
    locs = []
    c = state.constellation
    for group in (c.zeros, c.ones, c.poles):
        locs.extend(s.location for s in group if s.location is not None)
    best = _domain_scale(state)
    for i in range(len(locs)):
        for j in range(i + 1, len(locs)):
            d = locs[i] - locs[j]
            if ctx is not None:
                d, _, _ = ctx.reduce_point(d)
            best = min(best, abs(complex(d)))
    return best


def _zero_leading(state: SolverState, k: int, ctx) -> complex:
    """Leading Taylor coefficient of f at the k-th zero: the value of f with
    the vanishing local factor struck from the product."""
    c = state.constellation
    a = c.zeros[k].location
    with mp.workprec(state.precision_bits + elliptic.GUARD_BITS):
        acc = mpc(state.lam)
        if state.genus == 0:
            for i, s in enumerate(c.zeros):
                if i != k:
                    acc *= (a - s.location) ** s.multiplicity
            for s in finite_poles(c):
                acc /= (a - s.location) ** s.multiplicity
        else:
            for i, s in enumerate(c.zeros):
                if i != k:
                    acc *= elliptic.sigma(ctx, a - s.location) ** s.multiplicity
            for s in c.poles:
                acc /= elliptic.sigma(ctx, a - s.location) ** s.multiplicity
            m_cls, n_cls = state.sum_class
            if (m_cls, n_cls) != (0, 0):
                acc *= mp.exp((m_cls * ctx.eta1 + n_cls * ctx.eta2) * a)
        return complex(acc)


def _one_germ_angles(state: SolverState, j: int, ctx) -> list[float]:
    """Directions at the j-th one star along which f - 1 is negative real,
    sorted counterclockwise from -pi."""
    s = state.constellation.ones[j]
    d = s.multiplicity
    fs = f_derivatives(state, s.location, d, ctx)
    lead = complex(fs[d]) / factorial(d)
    base = (pi - atan2(lead.imag, lead.real)) / d
    spoke = 2 * pi / d
    angles = [base + m * spoke for m in range(d)]
    return sorted((a + pi) % (2 * pi) - pi for a in angles)


def _correct(state: SolverState, z: complex, target: float, ctx) -> Optional[complex]:
    """Newton-polish f(z) = target; None when it fails to settle."""
    for _ in range(12):
        f0, f1 = f_derivatives(state, z, 1, ctx)
        err = complex(f0) - target
        if abs(err) < CORRECTOR_TOL:
            return z
        if f1 == 0:
            return None
        z = z - complex(err / complex(f1))
    return None


def _launch_point(state: SolverState, k: int, germ_angle: float,
                  gap: float, ctx) -> tuple[complex, float]:
    """A corrected point with f real in (0, T_START], on the germ's ray."""
    c = state.constellation
    a = complex(c.zeros[k].location)
    d = c.zeros[k].multiplicity
    lead = abs(_zero_leading(state, k, ctx))
    t0 = T_START
    while t0 > 1e-12:
        r = (t0 / lead) ** (1.0 / d)
        if r > 0.25 * gap:
            t0 /= 4
            continue
        z = a + r * complex(cos(germ_angle), sin(germ_angle))
        zc = _correct(state, z, t0, ctx)
        if zc is not None:
            off = (atan2((zc - a).imag, (zc - a).real) - germ_angle + pi) % (2 * pi) - pi
            if abs(zc - a) < 0.5 * gap and abs(off) < pi / (2 * d):
                return zc, t0
        t0 /= 4
    raise TracingStalled(f"no launch point on germ {germ_angle:.3f} of zero {k}")


def _march(state: SolverState, z: complex, t: float, scale: float,
           ctx) -> list[complex]:
    """Follow f(gamma) = t from t up to 1 - T_STOP; returns the samples."""
    floor = STEP_FLOOR * scale
    h = STEP_CAP * scale
    t_end = 1.0 - T_STOP
    pts = [z]
    for _ in range(MAX_STEPS):
        if t >= t_end:
            return pts
        _, f1 = f_derivatives(state, z, 1, ctx)
        speed = abs(complex(f1))
        if speed == 0:
            raise TracingStalled("vanishing derivative on a lift")
        while True:
            dt = min(t_end - t, h * speed)
            zp = z + complex(dt / complex(f1))
            zc = _correct(state, zp, t + dt, ctx)
            if zc is not None and abs(zc - zp) <= h:
                break
            h /= 2
            if h < floor:
                raise TracingStalled(f"step fell under {floor:.2e} near t = {t:.4f}")
        z, t = zc, t + dt
        pts.append(z)
        h = min(2 * h, STEP_CAP * scale)
    raise TracingStalled(f"lift did not finish in {MAX_STEPS} steps")


def _nearest_one(state: SolverState, z: complex, ctx) -> tuple[int, complex, float]:
    """Index of the closest one star, the lattice lift of its location the
    point actually approached, and the approach angle."""
    best = None
    for j, s in enumerate(state.constellation.ones):
        w = mpc(z) - s.location
        if ctx is not None:
            w, _, _ = ctx.reduce_point(w)
        w = complex(w)
        if best is None or abs(w) < abs(best[1]):
            best = (j, w)
    j, w = best
    lift = z - w
    return j, lift, atan2(w.imag, w.real)


def _trace_all(state: SolverState) -> list[_Dart]:
    work = _downcast(state)
    ctx = work.lattice_ctx() if work.genus == 1 else None
    scale = _domain_scale(work)
    gap = _min_star_gap(work, ctx)
    darts = []
    c = work.constellation
    for k, s in enumerate(c.zeros):
        d = s.multiplicity
        lead = _zero_leading(work, k, ctx)
        base = -atan2(lead.imag, lead.real) / d
        spoke = 2 * pi / d
        for m in range(d):
            angle = base + m * spoke
            z0, t0 = _launch_point(work, k, angle, gap, ctx)
            pts = _march(work, z0, t0, scale, ctx)
            j, lift, approach = _nearest_one(work, pts[-1], ctx)
            if abs(pts[-1] - lift) > 0.5 * gap:
                raise TracingStalled(
                    f"lift from zero {k} ended {abs(pts[-1] - lift):.2e} from "
                    f"the nearest one star"
                )
            edge = TracedEdge(
                ("zero", k),
                ("one", j),
                "(0,1)",
                (complex(c.zeros[k].location),) + tuple(pts) + (lift,),
            )
            darts.append(_Dart(edge, k, m, j, -1))
    return _match_one_germs(work, darts, ctx)


def _match_one_germs(state: SolverState, darts: list[_Dart], ctx) -> list[_Dart]:
    """Assign each arrival to a germ slot of its one star, bijectively."""
    out = list(darts)
    for j, s in enumerate(state.constellation.ones):
        idx = [i for i, dart in enumerate(out) if dart.one_index == j]
        if len(idx) != s.multiplicity:
            raise WrongEndpointCount(
                f"one star {j} has multiplicity {s.multiplicity} but "
                f"received {len(idx)} lifts"
            )
        slots = _one_germ_angles(state, j, ctx)
        taken: dict[int, int] = {}
        for i in idx:
            end = out[i].edge.polyline[-1]
            probe = out[i].edge.polyline[-2]
            obs = atan2((probe - end).imag, (probe - end).real)
            gaps = [abs((obs - a + pi) % (2 * pi) - pi) for a in slots]
            pick = gaps.index(min(gaps))
            if pick in taken:
                raise WrongEndpointCount(
                    f"two lifts matched germ {pick} of one star {j}"
                )
            taken[pick] = i
            out[i] = replace(out[i], one_germ=pick)
    return out


def _assemble(state: SolverState, darts: list[_Dart]) -> Hypermap:
    n = len(darts)
    sigma = list(range(n))
    alpha = list(range(n))
    for k in range(len(state.constellation.zeros)):
        cyc = sorted(
            (i for i, dart in enumerate(darts) if dart.zero_index == k),
            key=lambda i: darts[i].zero_germ,
        )
        for a, b in zip(cyc, cyc[1:] + cyc[:1]):
            sigma[a] = b
    for j in range(len(state.constellation.ones)):
        cyc = sorted(
            (i for i, dart in enumerate(darts) if dart.one_index == j),
            key=lambda i: darts[i].one_germ,
        )
        for a, b in zip(cyc, cyc[1:] + cyc[:1]):
            alpha[a] = b
    return Hypermap.from_pair(sigma, alpha).validate()


def trace_segments(state: SolverState) -> list[TracedEdge]:
    """The N lifts of (0, 1), one per sheet, as drawable polylines."""
    _require_converged(state)
    return [dart.edge for dart in _trace_all(state)]


def trace_dessin(state: SolverState) -> Hypermap:
    """Rebuild the combinatorial map the converged covering realizes.

    Launch directions at each zero come from the local d-th-root structure
    of f, arrival slots at each one from the root structure of f - 1, and
    the two cyclic orders assemble sigma and alpha; phi is forced.
    """
    _require_converged(state)
    return _assemble(state, _trace_all(state))


def check_against(state: SolverState, target: Hypermap) -> bool:
    """Does the covering realize the target map?  Degree mismatches fail
    without tracing; otherwise trace and test isomorphism."""
    if state.constellation.degree() != target.n:
        return False
    return are_isomorphic(trace_dessin(state), target)


def edges_json(edges: list[TracedEdge]) -> list[dict]:
    """Plain-data form of traced edges for dumps and the render overlay."""
    return [
        {
            "start": list(e.start_star),
            "end": list(e.end_star),
            "segment": e.segment_class,
            "points": [[pt.real, pt.imag] for pt in e.polyline],
        }
        for e in edges
    ]
