"""Circle packings for triangulations, and solver seeds built from them.

Radii come from the uniform-neighbor iteration with superstep acceleration,
in plain double precision: the seed only has to land in the Newton basin.
Genus 0 removes the face at the designated pole vertex and pins its three
circles; genus 1 packs without boundary and recovers the period lattice from
the closing discrepancies of a breadth-first layout of the universal cover.
"""

from __future__ import annotations

import cmath
import math
from collections import deque
from dataclasses import dataclass
from typing import Optional

import numpy as np
from mpmath import mp, mpc, mpf

from .constellation import (
    Constellation,
    SolverState,
    Star,
    normalize_lambda,
)
from .elliptic import reduce_modulus
from .errors import (
    LayoutInconsistent,
    NoConvergence,
    NotATriangulation,
    UnsupportedGenus,
)
from .hypermap import Triangulation, cycles, subdivide

SEED_PRECISION_BITS = 53


@dataclass(frozen=True)
class PackedLayout:
    radii: tuple[float, ...]
    centers: tuple[complex, ...]
    tau: Optional[complex]
    subdivision_level: int


def _flower_arrays(t: Triangulation):
    """Flat petal-pair arrays for vectorized angle sums.

    Returns (starts, a_idx, b_idx, degrees): vertex v's corner angles are the
    entries [starts[v] : starts[v] + degrees[v]) with petal radii pairs
    (a_idx, b_idx)."""
    flowers = t.flowers()
    a_idx, b_idx, starts, degs = [], [], [], []
    pos = 0
    for petals in flowers:
        starts.append(pos)
        k = len(petals)
        degs.append(k)
        for i in range(k):
            a_idx.append(petals[i])
            b_idx.append(petals[(i + 1) % k])
        pos += k
    return (
        np.array(starts, dtype=np.int64),
        np.array(a_idx, dtype=np.int64),
        np.array(b_idx, dtype=np.int64),
        np.array(degs, dtype=np.int64),
    )


def _angle_sums(r, starts, a_idx, b_idx, degs):
    rv = np.repeat(r, degs)
    ra = r[a_idx]
    rb = r[b_idx]
    x = (rv + ra) ** 2 + (rv + rb) ** 2 - (ra + rb) ** 2
    cosines = x / (2.0 * (rv + ra) * (rv + rb))
    np.clip(cosines, -1.0, 1.0, out=cosines)
    return np.add.reduceat(np.arccos(cosines), starts)


def boundary_face(t: Triangulation) -> int:
    """Index of the face removed for a genus-0 packing: the first face at
    the designated pole vertex (first class-2 vertex), or face 0 when the
    triangulation carries no classes."""
    faces = cycles(t.phi)
    if t.vertex_classes is None or 2 not in t.vertex_classes:
        return 0
    p1 = t.vertex_classes.index(2)
    vod = t.vertex_of_dart()
    for i, cyc in enumerate(faces):
        if any(vod[d] == p1 for d in cyc):
            return i
    return 0


def pack_radii(t: Triangulation, tol: float = 1e-11, max_iters: int = 200000):
    """Per-vertex radii with every free vertex's angle sum within tol of 2pi.

    Genus 0 pins the three circles of the removed boundary face at radius 1;
    genus 1 has no boundary and fixes the scale by normalizing the geometric
    mean radius each sweep."""
    t.validate()
    genus = t.genus()
    if genus not in (0, 1):
        raise UnsupportedGenus(f"cannot pack genus {genus}")
    nv = t.num_vertices()
    starts, a_idx, b_idx, degs = _flower_arrays(t)
    free = np.ones(nv, dtype=bool)
    if genus == 0:
        face = cycles(t.phi)[boundary_face(t)]
        vod = t.vertex_of_dart()
        for d in face:
            free[vod[d]] = False
        if free.sum() == 0:
            return np.ones(nv)
    r = np.ones(nv)
    target = 2.0 * math.pi
    prev_err = None
    prev_r = None
    for it in range(max_iters):
        theta = _angle_sums(r, starts, a_idx, b_idx, degs)
        err = float(np.max(np.abs(theta[free] - target)))
        if err < tol:
            return r
        # uniform-neighbor update on the free vertices
        s = np.sin(theta[free] / (2.0 * degs[free]))
        s = np.clip(s, 1e-300, 1.0 - 1e-12)
        rhat = r[free] * s / (1.0 - s)
        shat = np.sin(math.pi / degs[free])
        new = rhat * (1.0 - shat) / shat
        r2 = r.copy()
        r2[free] = new
        if genus == 1:
            r2 /= math.exp(float(np.mean(np.log(r2))))
        # superstep: extrapolate along the last correction when improving
        if prev_err is not None and err < prev_err and prev_r is not None:
            lam = min(err / max(prev_err - err, 1e-300), 10.0)
            cand = r2 * (r2 / r) ** lam
            if np.all(np.isfinite(cand)) and np.all(cand > 0):
                tc = _angle_sums(cand, starts, a_idx, b_idx, degs)
                if float(np.max(np.abs(tc[free] - target))) < err:
                    prev_r, prev_err, r = r, err, cand
                    continue
        prev_r, prev_err, r = r, err, r2
    raise NoConvergence(
        f"radius iteration stuck at residual {prev_err:.3e}", max_iters=max_iters
    )


def _third_point(cu: complex, cv: complex, ru: float, rv: float, rw: float) -> complex:
    """Center of the circle tangent to circles (cu, ru) and (cv, rv), on the
    left of the directed segment cu -> cv."""
    d = cv - cu
    dist = abs(d)
    u = d / dist
    big_u = ru + rw
    big_v = rv + rw
    a = (dist * dist + big_u * big_u - big_v * big_v) / (2.0 * dist)
    h = math.sqrt(max(big_u * big_u - a * a, 0.0))
    return cu + u * complex(a, h)


def _bfs_layout(t: Triangulation, radii, skip_face: Optional[int]):
    """Place circles face by face in the universal cover.

    Works at the level of darts, so loops and doubled edges are fine: every
    dart gets the lift of its source vertex as seen from its own face.  A
    vertex's recorded center is its first lift.  Whenever a crossing lands on
    an already-laid face the translation mismatch is collected; on a sphere
    those are pure rounding noise, on a torus they generate the period
    lattice.  Returns (centers, discrepancies)."""
    vod = t.vertex_of_dart()
    faces = cycles(t.phi)
    phi, alpha = t.phi, t.alpha
    face_of_dart = [0] * t.n
    for i, cyc in enumerate(faces):
        for d in cyc:
            face_of_dart[d] = i
    r = [float(x) for x in radii]
    pos: list[Optional[complex]] = [None] * t.n
    visited = [False] * len(faces)
    centers: dict[int, complex] = {}
    queue: deque = deque()
    discrepancies: list[complex] = []

    def lay_face(d: int, cu: complex, cv: complex):
        e2 = phi[d]
        e3 = phi[e2]
        u, v, w = vod[d], vod[e2], vod[e3]
        cw = _third_point(cu, cv, r[u], r[v], r[w])
        pos[d], pos[e2], pos[e3] = cu, cv, cw
        visited[face_of_dart[d]] = True
        for vertex, c in ((u, cu), (v, cv), (w, cw)):
            centers.setdefault(vertex, c)
        for e in (d, e2, e3):
            queue.append((alpha[e], pos[phi[e]], pos[e]))

    if skip_face is not None:
        d1, d2, d3 = faces[skip_face]
        v1, v2, v3 = vod[d1], vod[d2], vod[d3]
        c1 = 0.0 + 0.0j
        c2 = complex(r[v1] + r[v2], 0.0)
        # clockwise: third corner goes below the axis so every kept face
        # lays out counterclockwise into the interstice
        c3 = _third_point(c1, c2, r[v1], r[v2], r[v3]).conjugate()
        pos[d1], pos[d2], pos[d3] = c1, c2, c3
        visited[skip_face] = True
        centers = {v1: c1, v2: c2, v3: c3}
        for e in (d1, d2, d3):
            queue.append((alpha[e], pos[phi[e]], pos[e]))
    else:
        d0 = 0
        u, v = vod[d0], vod[alpha[d0]]
        lay_face(d0, 0.0 + 0.0j, complex(r[u] + r[v], 0.0))

    while queue:
        d, cu, cv = queue.popleft()
        if visited[face_of_dart[d]]:
            for got, stored in ((cu, pos[d]), (cv, pos[phi[d]])):
                delta = got - stored
                if abs(delta) > 0:
                    discrepancies.append(delta)
            continue
        lay_face(d, cu, cv)
    if len(centers) != t.num_vertices():
        raise LayoutInconsistent("breadth-first placement missed vertices")
    out = [centers[v] for v in range(t.num_vertices())]
    return out, discrepancies


def _lattice_from_discrepancies(deltas, noise: float):
    """Gauss-reduced basis (w1, w2) of the lattice generated by the closing
    vectors; raises when they do not form a consistent rank-2 lattice."""
    big = sorted((d for d in deltas if abs(d) > noise), key=abs)
    if not big:
        raise LayoutInconsistent("no period vectors found in the layout")
    w1 = big[0]
    w2 = None
    for d in big:
        if abs(d.real * w1.imag - d.imag * w1.real) > noise * abs(w1):
            w2 = d
            break
    if w2 is None:
        raise LayoutInconsistent("period vectors are collinear")
    for _ in range(64):
        mu = (w2.real * w1.real + w2.imag * w1.imag) / abs(w1) ** 2
        w2 -= round(mu) * w1
        if abs(w2) < abs(w1):
            w1, w2 = w2, w1
        else:
            break
    det = w1.real * w2.imag - w1.imag * w2.real
    for d in big:
        # coordinates of d in the basis (w1, w2)
        m = (d.real * w2.imag - d.imag * w2.real) / det
        n = (d.imag * w1.real - d.real * w1.imag) / det
        resid = abs(d - round(m) * w1 - round(n) * w2)
        if resid > max(noise, 1e-7 * abs(w1)):
            raise LayoutInconsistent(
                f"closing vector {d} is not a lattice point (residual {resid:.2e})"
            )
    return w1, w2


def layout(t: Triangulation, radii, subdivision_level: int = 0) -> PackedLayout:
    """Centers for packed radii.

    Genus 0: plane layout with the boundary face's circles placed mutually
    tangent and every kept face counterclockwise; tangency holds on every
    edge.  Genus 1: one fundamental domain of the universal cover, periods
    normalized to (1, tau) with tau reduced, and the class-0 weighted
    centroid translated to 0."""
    t.validate()
    genus = t.genus()
    if genus not in (0, 1):
        raise UnsupportedGenus(f"cannot lay out genus {genus}")
    radii = np.asarray(radii, dtype=float)
    noise = 1e-6 * float(np.sum(radii)) / max(len(radii), 1)
    if genus == 0:
        centers, deltas = _bfs_layout(t, radii, boundary_face(t))
        bad = [d for d in deltas if abs(d) > noise]
        if bad:
            raise LayoutInconsistent(
                f"{len(bad)} face closures off by up to {max(abs(d) for d in bad):.2e}"
            )
        return PackedLayout(
            tuple(float(r) for r in radii),
            tuple(centers),
            None,
            subdivision_level,
        )
    centers, deltas = _bfs_layout(t, radii, None)
    w1, w2 = _lattice_from_discrepancies(deltas, noise)
    with mp.workprec(60):
        mu = complex(w2) / complex(w1)
        if mu.imag < 0:
            w2 = -w2
            mu = -mu
        mu_red, (a, b, c, d) = reduce_modulus(mpc(mu))
        tau = complex(mu_red)
    new_w1 = c * w2 + d * w1
    centers = [z / new_w1 for z in centers]
    radii = radii / abs(new_w1)
    # double-precision snap onto the canonical side of the domain boundary
    if abs(abs(tau) - 1) < 1e-9 and tau.real < -1e-9:
        centers = [z / tau for z in centers]
        radii = radii / abs(tau)
        tau = -1 / tau
    if abs(tau.real + 0.5) < 1e-9:
        tau += 1
    if t.vertex_classes is not None and 0 in t.vertex_classes:
        degs = [len(cyc) for cyc in cycles(t.sigma)]
        wsum = sum(
            (degs[v] // 2) * centers[v]
            for v in range(len(centers))
            if t.vertex_classes[v] == 0
        )
        wtot = sum(
            degs[v] // 2 for v in range(len(centers)) if t.vertex_classes[v] == 0
        )
        shift = wsum / wtot
        centers = [z - shift for z in centers]
    return PackedLayout(
        tuple(float(r) for r in radii),
        tuple(centers),
        tau,
        subdivision_level,
    )


def _mobius_to_standard(a: complex, b: complex, c: complex):
    """The Mobius map sending a -> 0, b -> 1, c -> infinity."""

    def move(z: complex) -> complex:
        return ((z - a) * (b - c)) / ((z - c) * (b - a))

    return move


def initial_state(
    t_original: Triangulation,
    level: int,
    genus: int,
    tol: float = 1e-11,
) -> SolverState:
    """Pack the `level`-times-subdivided triangulation and read off a seed.

    Star locations are the circle centers of the original vertices
    (subdivision vertices only stiffen the packing); multiplicities are half
    the vertex degrees.  Genus 0 is Mobius-normalized to z1 = 0, o1 = 1,
    p1 = infinity; genus 1 picks integer lattice lifts of zeros and poles
    cancelling the reachable part of the weighted-sum class (the remainder is
    frozen into the state), translates onto the zero-sum locus, and snaps p1
    onto the locus the chart derives it from.  lam is set so f(o1) = 1."""
    t_original.validate()
    if t_original.vertex_classes is None:
        raise NotATriangulation("seed construction needs a tripartite coloring")
    if genus != t_original.genus():
        raise UnsupportedGenus(
            f"triangulation has genus {t_original.genus()}, caller said {genus}"
        )
    t = t_original
    for _ in range(level):
        t = subdivide(t)
    radii = pack_radii(t, tol)
    lay = layout(t, radii, subdivision_level=level)

    nv0 = t_original.num_vertices()
    classes = t_original.vertex_classes
    degrees = [len(cyc) for cyc in cycles(t_original.sigma)]
    groups = {0: [], 1: [], 2: []}
    for v in range(nv0):
        groups[classes[v]].append((lay.centers[v], degrees[v] // 2))
    if not (groups[0] and groups[1] and groups[2]):
        raise NotATriangulation("a vertex class is empty")

    if genus == 0:
        a = groups[0][0][0]
        b = groups[1][0][0]
        c = groups[2][0][0]
        move = _mobius_to_standard(a, b, c)
        zeros = [Star(mpc(0), groups[0][0][1])]
        zeros += [Star(mpc(move(z)), d) for z, d in groups[0][1:]]
        ones = [Star(mpc(1), groups[1][0][1])]
        ones += [Star(mpc(move(z)), d) for z, d in groups[1][1:]]
        poles = [Star(None, groups[2][0][1])]
        poles += [Star(mpc(move(z)), d) for z, d in groups[2][1:]]
        state = SolverState(
            0,
            mpc(1),
            None,
            Constellation(tuple(zeros), tuple(ones), tuple(poles)),
            SEED_PRECISION_BITS,
        )
        return normalize_lambda(state)

    tau = lay.tau
    zs = list(groups[0])
    os_ = list(groups[1])
    ps = list(groups[2])
    degree = sum(d for _, d in zs)

    # The weighted sum difference sits near a lattice point m + n tau whose
    # class modulo gcd(multiplicities) * lattice is a topological invariant.
    # Integer lattice lifts on individual stars cancel the reachable part;
    # whatever remains is frozen into the state, where the reconstruction
    # compensates with an exponential factor.
    dz = sum(d * z for z, d in zs)
    dp = sum(d * p for p, d in ps)
    m, n, _ = _split_lattice(dz - dp, tau)
    weights = [d for _, d in zs] + [-d for _, d in ps]
    g = math.gcd(*(abs(w) for w in weights))
    m_cls = m - g * round(m / g)
    n_cls = n - g * round(n / g)
    xs = _weighted_int_solve(weights, m_cls - m)
    ys = _weighted_int_solve(weights, n_cls - n)
    if xs is None or ys is None:
        raise LayoutInconsistent("lattice lift solve failed on a divisible class")
    lifts = [x + y * tau for x, y in zip(xs, ys)]
    zs = [(z + lifts[i], d) for i, (z, d) in enumerate(zs)]
    ps = [(p + lifts[len(zs) + i], d) for i, (p, d) in enumerate(ps)]
    shift = sum(d * z for z, d in zs) / degree
    zs = [(z - shift, d) for z, d in zs]
    os_ = [(z - shift, d) for z, d in os_]
    ps = [(p - shift, d) for p, d in ps]
    # the residual pole-sum error is packing noise plus lattice rounding;
    # snap the first pole onto the locus the chart derives it from
    d1 = ps[0][1]
    rest = sum(d * p for p, d in ps[1:])
    ps[0] = ((-(m_cls + n_cls * tau) - rest) / d1, d1)
    state = SolverState(
        1,
        mpc(1),
        mpc(tau),
        Constellation(
            tuple(Star(mpc(z), d) for z, d in zs),
            tuple(Star(mpc(z), d) for z, d in os_),
            tuple(Star(mpc(z), d) for z, d in ps),
        ),
        SEED_PRECISION_BITS,
        sum_class=(m_cls, n_cls),
    )
    return normalize_lambda(state)


def _split_lattice(u: complex, tau: complex):
    """Write u = m + n*tau + err with integer m, n and minimal err."""
    n = round(u.imag / tau.imag)
    m = round(u.real - n * tau.real)
    return m, n, u - (m + n * tau)


def _weighted_int_solve(weights, target: int):
    """Integers x with sum(w*x) == target, kept small; None if unsolvable.

    Built by an extended-gcd sweep, then pairwise reduced so no single
    star is pushed several cells away when one cell is enough.
    """
    g = 0
    coeffs = [0] * len(weights)
    for i, w in enumerate(weights):
        if g == 0:
            if w != 0:
                g, coeffs = abs(w), [0] * len(weights)
                coeffs[i] = 1 if w > 0 else -1
            continue
        gg, a, b = _ext_gcd(g, w)
        coeffs = [c * a for c in coeffs]
        coeffs[i] = b
        g = gg
    if g == 0:
        return [0] * len(weights) if target == 0 else None
    if target % g:
        return None
    xs = [c * (target // g) for c in coeffs]
    for _ in range(2):
        for i in range(len(xs)):
            for j in range(len(xs)):
                if i == j or weights[i] == 0 or weights[j] == 0:
                    continue
                gij = math.gcd(weights[i], weights[j])
                si, sj = weights[j] // gij, weights[i] // gij
                # xs[i] -= si*k, xs[j] += sj*k keeps the sum; pick k to
                # shrink xs[i]
                k = round(xs[i] / si) if si else 0
                if k and abs(xs[i] - si * k) + abs(xs[j] + sj * k) < abs(
                    xs[i]
                ) + abs(xs[j]):
                    xs[i] -= si * k
                    xs[j] += sj * k
    return xs


def _ext_gcd(a: int, b: int):
    """(g, x, y) with a*x + b*y = g = gcd(a, b), g >= 0."""
    old_r, r = a, b
    old_s, s = 1, 0
    old_t, t = 0, 1
    while r:
        q = old_r // r
        old_r, r = r, old_r - q * r
        old_s, s = s, old_s - q * s
        old_t, t = t, old_t - q * t
    if old_r < 0:
        old_r, old_s, old_t = -old_r, -old_s, -old_t
    return old_r, old_s, old_t
