"""Constellations: star data for candidate Belyi functions, and the residual.

A constellation lists zeros Z, ones O, and poles P, each a star (location,
multiplicity).  Star order is the hypermap's cycle order (cycles sorted by
their least half-edge), and that order is relied on everywhere downstream.

Genus 0 works on the sphere with the normalization z1 = 0, p1 = infinity
(location None), o1 = 1, and

    f(z) = lam * prod (z - z_i)^d0_i / prod (z - p_j)^dinf_j .

Genus 1 works on C/(Z + tau Z) with every location finite,

    f(z) = lam * exp(c z) * prod sigma(z - z_i)^d0_i / prod sigma(z - p_j)^dinf_j ,

where c = m eta1 + n eta2 for the integers (m, n) with

    sum d0_i z_i - sum dinf_j p_j = m + n tau .

By the Legendre relation the exponential factor exactly cancels the
quasi-periodicity of the sigma quotient, so f is doubly periodic.  The
class of (m, n) modulo the lattice shifts reachable by re-lifting the
stars is a topological invariant of the dessin; most cells in the chart
have (m, n) = (0, 0) and a pure sigma quotient, but some need the factor
(the smallest torus example with a 9-fold zero does).  The state keeps
(m, n) frozen while the first zero and first pole are recomputed from
the other locations to hold the two weighted sums on the locus above.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from math import comb
from typing import Optional

from mpmath import mp, mpc, mpf, fabs, log

from . import elliptic
from .errors import (
    DegenerateState,
    EvaluationAtPole,
    EvaluationAtSingularity,
    NonIntegerGenus,
    NotBalanced,
    PoleAtLatticePoint,
    WrongGenus,
)
from .hypermap import Hypermap, cycles


@dataclass(frozen=True)
class Star:
    location: Optional[mpc]  # None encodes the point at infinity (genus 0 pole)
    multiplicity: int


@dataclass(frozen=True)
class Signature:
    genus: int
    zero_orders: tuple[int, ...]
    one_orders: tuple[int, ...]
    pole_orders: tuple[int, ...]

    @property
    def degree(self) -> int:
        return sum(self.zero_orders)


@dataclass(frozen=True)
class Constellation:
    zeros: tuple[Star, ...]
    ones: tuple[Star, ...]
    poles: tuple[Star, ...]

    def degree(self) -> int:
        d = sum(s.multiplicity for s in self.zeros)
        d1 = sum(s.multiplicity for s in self.ones)
        dp = sum(s.multiplicity for s in self.poles)
        if not d == d1 == dp:
            raise NotBalanced(f"degrees differ: zeros {d}, ones {d1}, poles {dp}")
        return d

    def signature(self, genus: int) -> Signature:
        return Signature(
            genus,
            tuple(s.multiplicity for s in self.zeros),
            tuple(s.multiplicity for s in self.ones),
            tuple(s.multiplicity for s in self.poles),
        )


def constellation_genus(c: Constellation) -> int:
    """Genus by Riemann-Hurwitz: 2 - 2g = #stars - degree."""
    n_stars = len(c.zeros) + len(c.ones) + len(c.poles)
    chi = n_stars - c.degree()
    if chi % 2:
        raise NonIntegerGenus(f"#stars - degree = {chi} is odd")
    return (2 - chi) // 2


def signature_of(m: Hypermap) -> Signature:
    """Multiplicities read off the hypermap: sigma-cycles are zero orders,
    alpha-cycles one orders, phi-cycles pole orders."""
    return Signature(
        m.genus(),
        tuple(len(c) for c in cycles(m.sigma)),
        tuple(len(c) for c in cycles(m.alpha)),
        tuple(len(c) for c in cycles(m.phi)),
    )


@dataclass(frozen=True)
class SolverState:
    genus: int
    lam: mpc
    tau: Optional[mpc]
    constellation: Constellation
    precision_bits: int
    #: genus 1 only: lattice coordinates (m, n) of sum d0 z - sum dinf p.
    #: Nonzero classes put the factor exp((m eta1 + n eta2) z) into f.
    sum_class: tuple[int, int] = (0, 0)

    def __post_init__(self):
        if self.genus not in (0, 1):
            raise WrongGenus(f"genus {self.genus} not supported")
        if self.genus == 1 and self.tau is None:
            raise WrongGenus("genus 1 state needs a modulus tau")
        if self.genus == 0 and self.sum_class != (0, 0):
            raise WrongGenus("sum_class is meaningless on a genus 0 state")

    def lattice_ctx(self) -> elliptic.LatticeContext:
        if self.genus != 1:
            raise WrongGenus("no lattice on a genus 0 state")
        return elliptic.LatticeContext(self.tau, self.precision_bits)

    def scale(self) -> mpf:
        locs = [
            s.location
            for group in (
                self.constellation.zeros,
                self.constellation.ones,
                self.constellation.poles,
            )
            for s in group
            if s.location is not None
        ]
        return max([mpf(1)] + [fabs(z) for z in locs])


def finite_poles(c: Constellation) -> list[Star]:
    return [s for s in c.poles if s.location is not None]


def unknown_vector(state: SolverState) -> list[mpc]:
    """Chart coordinates: genus 0 packs (lam, z2.., p2.., o2..); genus 1
    packs (tau, lam, z2.., p2.., o1..).  Length equals the degree."""
    c = state.constellation
    if state.genus == 0:
        vec = [state.lam]
        vec += [s.location for s in c.zeros[1:]]
        vec += [s.location for s in c.poles[1:]]
        vec += [s.location for s in c.ones[1:]]
    else:
        vec = [state.tau, state.lam]
        vec += [s.location for s in c.zeros[1:]]
        vec += [s.location for s in c.poles[1:]]
        vec += [s.location for s in c.ones]
    return vec


def with_unknowns(state: SolverState, vec) -> SolverState:
    """Rebuild a state from chart coordinates, restoring the pinned and the
    derived locations.  Runs at the state's precision regardless of the
    ambient context, so the derived locations stay consistent with tau."""
    with mp.workprec(state.precision_bits + elliptic.GUARD_BITS):
        return _with_unknowns_inner(state, vec)


def _with_unknowns_inner(state: SolverState, vec) -> SolverState:
    c = state.constellation
    n0, np_, n1 = len(c.zeros), len(c.poles), len(c.ones)
    vec = [mpc(v) for v in vec]
    if state.genus == 0:
        lam = vec[0]
        rest = vec[1:]
        zs = [mpc(0)] + rest[: n0 - 1]
        ps = [None] + rest[n0 - 1 : n0 - 1 + np_ - 1]
        os_ = [mpc(1)] + rest[n0 + np_ - 2 :]
        tau = None
    else:
        tau, lam = vec[0], vec[1]
        rest = vec[2:]
        zs_free = rest[: n0 - 1]
        ps_free = rest[n0 - 1 : n0 - 1 + np_ - 1]
        os_ = rest[n0 + np_ - 2 :]
        d0 = [s.multiplicity for s in c.zeros]
        dp = [s.multiplicity for s in c.poles]
        m_cls, n_cls = state.sum_class
        z1 = -sum(d * z for d, z in zip(d0[1:], zs_free)) / d0[0] if n0 > 1 else mpc(0)
        # the pole sum absorbs the frozen class: with the zero sum at 0 this
        # keeps sum d0 z - sum dinf p = m + n tau exactly at every iterate
        p1 = (
            -(m_cls + n_cls * tau) - sum(d * p for d, p in zip(dp[1:], ps_free))
        ) / dp[0]
        zs = [z1] + zs_free
        ps = [p1] + ps_free
    new_c = Constellation(
        tuple(Star(z, s.multiplicity) for z, s in zip(zs, c.zeros)),
        tuple(Star(o, s.multiplicity) for o, s in zip(os_, c.ones)),
        tuple(Star(p, s.multiplicity) for p, s in zip(ps, c.poles)),
    )
    return replace(state, lam=lam, tau=tau, constellation=new_c)


def _require_genus01(state: SolverState):
    if state.genus not in (0, 1):
        raise WrongGenus(f"genus {state.genus} not supported")


def _class_coefficient(state: SolverState, ctx: elliptic.LatticeContext) -> mpc:
    """c = m eta1 + n eta2 for the state's frozen sum class (0 if trivial)."""
    m_cls, n_cls = state.sum_class
    if m_cls == 0 and n_cls == 0:
        return mpc(0)
    return m_cls * ctx.eta1 + n_cls * ctx.eta2


def evaluate_f(state: SolverState, w, ctx: Optional[elliptic.LatticeContext] = None):
    """f(w) from the product form at the state's working precision."""
    _require_genus01(state)
    c = state.constellation
    with mp.workprec(state.precision_bits + elliptic.GUARD_BITS):
        w = mpc(w)
        if state.genus == 0:
            num = mpc(1)
            for s in c.zeros:
                num *= (w - s.location) ** s.multiplicity
            den = mpc(1)
            for s in finite_poles(c):
                d = w - s.location
                if d == 0:
                    raise EvaluationAtPole(f"f evaluated at pole {s.location}")
                den *= d**s.multiplicity
            return state.lam * num / den
        ctx = ctx or state.lattice_ctx()
        num = mpc(1)
        for s in c.zeros:
            num *= elliptic.sigma(ctx, w - s.location) ** s.multiplicity
        den = mpc(1)
        for s in c.poles:
            sv = elliptic.sigma(ctx, w - s.location)
            if sv == 0:
                raise EvaluationAtPole(f"f evaluated at pole {s.location}")
            den *= sv**s.multiplicity
        cc = _class_coefficient(state, ctx)
        head = state.lam if cc == 0 else state.lam * mp.exp(cc * w)
        return head * num / den


def log_derivatives(
    state: SolverState,
    w,
    order: int,
    ctx: Optional[elliptic.LatticeContext] = None,
) -> list[mpc]:
    """[g'(w), ..., g^(order)(w)] for g = log f; no branch choice needed.

    Genus 0: g^(k)(w) = (-1)^(k-1) (k-1)! [sum d0/(w-z)^k - sum dinf/(w-p)^k].
    Genus 1: the same shape with zeta^(k-1) in place of the power kernels,
    plus the constant class coefficient on g' alone.
    """
    _require_genus01(state)
    c = state.constellation
    if order < 1:
        return []
    with mp.workprec(state.precision_bits + elliptic.GUARD_BITS):
        w = mpc(w)
        out = []
        if state.genus == 0:
            terms = [(s.multiplicity, w - s.location) for s in c.zeros]
            terms += [(-s.multiplicity, w - s.location) for s in finite_poles(c)]
            if any(d == 0 for _, d in terms):
                raise EvaluationAtSingularity("log-derivative at a zero or pole of f")
            sign = 1
            fact = 1
            for k in range(1, order + 1):
                out.append(sign * fact * sum(m / d**k for m, d in terms))
                sign = -sign
                fact *= k
            return out
        ctx = ctx or state.lattice_ctx()
        try:
            lads = [
                (s.multiplicity, elliptic.zeta_derivatives(ctx, w - s.location, order - 1))
                for s in c.zeros
            ]
            lads += [
                (-s.multiplicity, elliptic.zeta_derivatives(ctx, w - s.location, order - 1))
                for s in c.poles
            ]
        except PoleAtLatticePoint as exc:
            raise EvaluationAtSingularity(
                "log-derivative at a zero or pole of f"
            ) from exc
        for k in range(1, order + 1):
            out.append(sum(m * lad[k - 1] for m, lad in lads))
        out[0] += _class_coefficient(state, ctx)
        return out


def f_derivatives(
    state: SolverState,
    w,
    order: int,
    ctx: Optional[elliptic.LatticeContext] = None,
) -> list[mpc]:
    """[f(w), f'(w), ..., f^(order)(w)] by the Leibniz ladder on f' = g' f."""
    with mp.workprec(state.precision_bits + elliptic.GUARD_BITS):
        f0 = evaluate_f(state, w, ctx)
        if order == 0:
            return [f0]
        gs = log_derivatives(state, w, order, ctx)
        fs = [f0]
        for m in range(1, order + 1):
            fs.append(
                sum(comb(m - 1, l) * gs[l] * fs[m - 1 - l] for l in range(m))
            )
        return fs


def phi_residual(
    state: SolverState, ctx: Optional[elliptic.LatticeContext] = None
) -> list[mpc]:
    """Residual of the ones conditions, one block per one-star:
    f(o_i) - 1, then f^(k)(o_i) for k = 1 .. multiplicity-1."""
    _require_genus01(state)
    c = state.constellation
    c.degree()
    if state.genus == 1 and ctx is None:
        ctx = state.lattice_ctx()
    out = []
    with mp.workprec(state.precision_bits + elliptic.GUARD_BITS):
        for s in c.ones:
            fs = f_derivatives(state, s.location, s.multiplicity - 1, ctx)
            out.append(fs[0] - 1)
            out.extend(fs[1:])
    return out


def check_degenerate(state: SolverState, threshold=None):
    """Raise DegenerateState when zeros/poles collide or lam vanishes.

    The threshold defaults to scale * 2^(-precision/2); genus 1 distances are
    measured modulo the lattice.
    """
    with mp.workprec(state.precision_bits + elliptic.GUARD_BITS):
        if threshold is None:
            threshold = state.scale() * mpf(2) ** (-state.precision_bits // 2)
        if state.lam == 0 or not mp.isfinite(state.lam):
            raise DegenerateState("lam vanished or overflowed")
        c = state.constellation
        locs = [s.location for s in c.zeros] + [
            s.location for s in finite_poles(c)
        ]
        ctx = state.lattice_ctx() if state.genus == 1 else None
        for i in range(len(locs)):
            for j in range(i + 1, len(locs)):
                d = locs[i] - locs[j]
                if ctx is not None:
                    d, _, _ = ctx.reduce_point(d)
                if fabs(d) < threshold:
                    raise DegenerateState(
                        f"stars {i} and {j} within {threshold} of collision"
                    )
    return state


def normalize_lambda(state: SolverState) -> SolverState:
    """Rescale lam so that f(o_1) = 1 exactly at the current locations."""
    probe = replace(state, lam=mpc(1))
    with mp.workprec(state.precision_bits + elliptic.GUARD_BITS):
        val = evaluate_f(probe, state.constellation.ones[0].location)
        if val == 0 or not mp.isfinite(val):
            raise DegenerateState("cannot normalize lam: f(o_1) is 0 or infinite")
        return replace(state, lam=1 / val)
