"""Hypermaps as permutation triples, and triangulations as directed-edge maps.

A hypermap on n half-edges is a triple (sigma, alpha, phi) of permutations of
{0..n-1} composing to the identity left to right (sigma first, then alpha,
then phi) with <sigma, alpha> transitive.  sigma rotates half-edges
counterclockwise around black vertices, alpha around white vertices, phi
around faces.

A triangulation is a hypermap whose half-edges are directed edges: alpha is
the fixed-point-free reversal involution, every phi-cycle is a triangle read
counterclockwise, and sigma rotates directed edges counterclockwise around
their source vertex.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, replace
from typing import Optional, Sequence

from .errors import (
    CompositionMismatch,
    Disconnected,
    NonIntegerGenus,
    NotATriangulation,
    ParseError,
    SizeMismatch,
)

Perm = tuple[int, ...]


def identity(n: int) -> Perm:
    return tuple(range(n))


def inverse(p: Sequence[int]) -> Perm:
    inv = [0] * len(p)
    for i, j in enumerate(p):
        inv[j] = i
    return tuple(inv)


def chain(*perms: Sequence[int]) -> Perm:
    """Compose left to right: chain(p, q)[x] == q[p[x]]."""
    if not perms:
        raise ValueError("chain needs at least one permutation")
    n = len(perms[0])
    out = list(range(n))
    for p in perms:
        if len(p) != n:
            raise SizeMismatch(f"cannot chain permutations of sizes {n} and {len(p)}")
        out = [p[x] for x in out]
    return tuple(out)


def is_permutation(p: Sequence[int]) -> bool:
    n = len(p)
    seen = [False] * n
    for x in p:
        if not isinstance(x, int) or not 0 <= x < n or seen[x]:
            return False
        seen[x] = True
    return True


def cycles(p: Sequence[int]) -> list[tuple[int, ...]]:
    """Cycles of p, each rotated to start at its least element, sorted by it."""
    n = len(p)
    seen = [False] * n
    out = []
    for start in range(n):
        if seen[start]:
            continue
        cyc = [start]
        seen[start] = True
        x = p[start]
        while x != start:
            cyc.append(x)
            seen[x] = True
            x = p[x]
        out.append(tuple(cyc))
    return out


def cycle_lengths(p: Sequence[int]) -> list[int]:
    return [len(c) for c in cycles(p)]


def cycle_string(p: Sequence[int]) -> str:
    parts = []
    for cyc in cycles(p):
        if len(cyc) > 1:
            parts.append("(" + " ".join(str(x) for x in cyc) + ")")
    return "".join(parts) if parts else "()"


def from_cycles(text: str, n: Optional[int] = None) -> Perm:
    """Parse cycle notation like "(0 5 2)(1 4 3)"; unlisted points are fixed.

    Separators inside a cycle may be spaces or commas.  The ground set size
    is n when given, otherwise 1 + the largest point mentioned.
    """
    text = text.strip()
    if text in ("", "()"):
        if n is None:
            raise ParseError("empty cycle expression needs an explicit size")
        return identity(n)
    if not re.fullmatch(r"(\s*\([^()]*\)\s*)+", text):
        raise ParseError(f"not a cycle expression: {text!r}")
    cyc_lists = []
    for body in re.findall(r"\(([^()]*)\)", text):
        pts = [tok for tok in re.split(r"[,\s]+", body.strip()) if tok]
        try:
            cyc = [int(tok) for tok in pts]
        except ValueError:
            raise ParseError(f"non-integer point in cycle ({body})") from None
        if any(x < 0 for x in cyc):
            raise ParseError("cycle points must be nonnegative")
        cyc_lists.append(cyc)
    top = max((max(c) for c in cyc_lists if c), default=-1)
    if n is None:
        n = top + 1
    elif top >= n:
        raise ParseError(f"point {top} outside ground set of size {n}")
    out = list(range(n))
    seen = set()
    for cyc in cyc_lists:
        for x in cyc:
            if x in seen:
                raise ParseError(f"point {x} appears twice")
            seen.add(x)
        for a, b in zip(cyc, cyc[1:] + cyc[:1]):
            out[a] = b
    return tuple(out)


def _as_perm(value, n: Optional[int] = None) -> Perm:
    if isinstance(value, str):
        return from_cycles(value, n)
    p = tuple(int(x) for x in value)
    if not is_permutation(p):
        raise ParseError(f"not a permutation: {value!r}")
    return p


@dataclass(frozen=True)
class Hypermap:
    sigma: Perm
    alpha: Perm
    phi: Perm

    @classmethod
    def from_pair(cls, sigma, alpha, n: Optional[int] = None) -> "Hypermap":
        """Build from sigma and alpha; phi is forced by the composition law."""
        s = _as_perm(sigma, n)
        a = _as_perm(alpha, n if n is not None else len(s))
        if len(a) != len(s):
            # cycle notation drops trailing fixed points; pad the shorter one
            m = max(len(a), len(s))
            s = _as_perm(sigma, m) if isinstance(sigma, str) else s
            a = _as_perm(alpha, m) if isinstance(alpha, str) else a
        return cls(s, a, inverse(chain(s, a)))

    @classmethod
    def from_dict(cls, data: dict) -> "Hypermap":
        try:
            n = data.get("n")
            if "phi" in data and data["phi"] is not None:
                s = _as_perm(data["sigma"], n)
                n = n if n is not None else len(s)
                return cls(s, _as_perm(data["alpha"], n), _as_perm(data["phi"], n))
            return cls.from_pair(data["sigma"], data["alpha"], n)
        except KeyError as exc:
            raise ParseError(f"hypermap dict missing key {exc}") from None

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "sigma": cycle_string(self.sigma),
            "alpha": cycle_string(self.alpha),
            "phi": cycle_string(self.phi),
        }

    @property
    def n(self) -> int:
        return len(self.sigma)

    def validate(self) -> "Hypermap":
        n = len(self.sigma)
        if len(self.alpha) != n or len(self.phi) != n:
            raise SizeMismatch(
                f"sizes differ: {n}, {len(self.alpha)}, {len(self.phi)}"
            )
        for name, p in (("sigma", self.sigma), ("alpha", self.alpha), ("phi", self.phi)):
            if not is_permutation(p):
                raise CompositionMismatch(f"{name} is not a permutation of 0..{n - 1}")
        if chain(self.sigma, self.alpha, self.phi) != identity(n):
            raise CompositionMismatch("sigma then alpha then phi is not the identity")
        if n and len(_orbit(self.sigma, self.alpha, 0)) != n:
            raise Disconnected("half-edge action of <sigma, alpha> is not transitive")
        return self

    def genus(self) -> int:
        c = len(cycles(self.sigma)) + len(cycles(self.alpha)) + len(cycles(self.phi))
        twice = self.n + 2 - c
        if twice % 2:
            raise NonIntegerGenus(f"n + 2 - #cycles = {twice} is odd")
        g = twice // 2
        if g < 0:
            raise NonIntegerGenus(f"computed genus {g} is negative")
        return g

    def dual(self) -> "Hypermap":
        """Exchange vertices and faces: (phi^-1, alpha^-1, sigma^-1)."""
        return Hypermap(inverse(self.phi), inverse(self.alpha), inverse(self.sigma))

    def passport(self) -> tuple[tuple[int, ...], tuple[int, ...], tuple[int, ...]]:
        """Sorted cycle-length lists of sigma, alpha, phi (the signature data)."""
        return (
            tuple(sorted(cycle_lengths(self.sigma), reverse=True)),
            tuple(sorted(cycle_lengths(self.alpha), reverse=True)),
            tuple(sorted(cycle_lengths(self.phi), reverse=True)),
        )


def _orbit(p: Perm, q: Perm, start: int) -> set[int]:
    seen = {start}
    frontier = [start]
    while frontier:
        x = frontier.pop()
        for y in (p[x], q[x]):
            if y not in seen:
                seen.add(y)
                frontier.append(y)
    return seen


@dataclass(frozen=True)
class Triangulation(Hypermap):
    """Directed-edge map with triangular faces; vertices are sigma-cycles.

    vertex_classes, when present, colors the vertices (indexed in sigma-cycle
    order) with 0, 1, 2 so that every face sees all three colors.
    """

    vertex_classes: Optional[tuple[int, ...]] = None

    def validate(self) -> "Triangulation":
        super().validate()
        for i, j in enumerate(self.alpha):
            if j == i or self.alpha[j] != i:
                raise NotATriangulation("alpha is not a fixed-point-free involution")
        for cyc in cycles(self.phi):
            if len(cyc) != 3:
                raise NotATriangulation(f"face {cyc} is not a triangle")
        if self.vertex_classes is not None:
            nv = len(cycles(self.sigma))
            if len(self.vertex_classes) != nv:
                raise NotATriangulation(
                    f"{len(self.vertex_classes)} classes for {nv} vertices"
                )
            vod = self.vertex_of_dart()
            for cyc in cycles(self.phi):
                if {self.vertex_classes[vod[d]] for d in cyc} != {0, 1, 2}:
                    raise NotATriangulation(f"face {cyc} misses a vertex class")
        return self

    def vertex_of_dart(self) -> list[int]:
        out = [0] * self.n
        for v, cyc in enumerate(cycles(self.sigma)):
            for d in cyc:
                out[d] = v
        return out

    def num_vertices(self) -> int:
        return len(cycles(self.sigma))

    def flowers(self) -> list[list[int]]:
        """Per vertex, the cyclic list of neighbor vertices in sigma order."""
        vod = self.vertex_of_dart()
        return [[vod[self.alpha[d]] for d in cyc] for cyc in cycles(self.sigma)]

    def faces_as_vertices(self) -> list[tuple[int, int, int]]:
        vod = self.vertex_of_dart()
        return [tuple(vod[d] for d in cyc) for cyc in cycles(self.phi)]


def tripartite_refinement(m: Hypermap) -> Triangulation:
    """Refine a hypermap into a triangulation with one new vertex per face.

    Black vertices keep class 0, white vertices class 1, and each face gains
    a class-2 vertex joined to every corner on its boundary walk.  All faces
    of the result are coherently counterclockwise, so sigma of the result
    rotates counterclockwise exactly when sigma of the input does.
    """
    m.validate()
    n = m.n
    if n == 0:
        raise NotATriangulation("cannot refine an empty hypermap")
    inv_alpha = inverse(m.alpha)
    phi = m.phi

    # Directed-edge labels, one block of n per kind:
    #   F h : black(h) -> white(h)      (dart h traversed forward)
    #   B h : white(h) -> black(phi h)  (dart h traversed backward)
    #   WR h: white(h) -> face center   RW h: reverse
    #   RB h: face center -> black(h)   BR h: reverse
    F, B, WR, RW, RB, BR = (k * n for k in range(6))
    nn = 6 * n
    new_phi = [0] * nn
    new_alpha = [0] * nn
    for h in range(n):
        # corner triangle (black(h), white(h), center), counterclockwise
        new_phi[F + h] = WR + h
        new_phi[WR + h] = RB + h
        new_phi[RB + h] = F + h
        # corner triangle (white(h), black(phi h), center)
        new_phi[B + inv_alpha[h]] = BR + phi[h]
        new_phi[BR + phi[h]] = RW + h
        new_phi[RW + h] = B + inv_alpha[h]
        new_alpha[F + h] = B + h
        new_alpha[B + h] = F + h
        new_alpha[WR + h] = RW + h
        new_alpha[RW + h] = WR + h
        new_alpha[RB + h] = BR + h
        new_alpha[BR + h] = RB + h
    new_phi = tuple(new_phi)
    new_alpha = tuple(new_alpha)
    new_sigma = chain(inverse(new_phi), new_alpha)

    classes = []
    for cyc in cycles(new_sigma):
        d = cyc[0]
        classes.append(0 if d < n else (1 if d < 3 * n else 2))
    t = Triangulation(new_sigma, new_alpha, new_phi, tuple(classes))
    return t.validate()


def subdivide(t: Triangulation) -> Triangulation:
    """Midpoint-subdivide every triangle into four.

    Works entirely on directed edges so loops and doubled edges subdivide
    correctly.  Midpoint vertices get the class missing from their edge's two
    endpoints when the input is colored.
    """
    t.validate()
    n = t.n
    alpha, phi = t.alpha, t.phi
    inv_phi = inverse(phi)

    # New directed-edge labels per old dart h (old dart runs v -> w):
    #   S1 h: v -> mid(h)         S2 h: mid(h) -> w
    #   C h : mid(h) -> mid(previous dart in face)   T h: mid(h) -> mid(phi h)
    S1, S2, C, T = (k * n for k in range(4))
    nn = 4 * n
    new_phi = [0] * nn
    new_alpha = [0] * nn
    for h in range(n):
        new_phi[S1 + h] = C + h
        new_phi[C + h] = S2 + inv_phi[h]
        new_phi[S2 + h] = S1 + phi[h]
        new_phi[T + h] = T + phi[h]
        new_alpha[S1 + h] = S2 + alpha[h]
        new_alpha[S2 + h] = S1 + alpha[h]
        new_alpha[C + h] = T + inv_phi[h]
        new_alpha[T + h] = C + phi[h]
    new_phi = tuple(new_phi)
    new_alpha = tuple(new_alpha)
    new_sigma = chain(inverse(new_phi), new_alpha)

    classes = None
    if t.vertex_classes is not None:
        vod = t.vertex_of_dart()
        old = t.vertex_classes
        classes = []
        for cyc in cycles(new_sigma):
            d = cyc[0]
            if d < n:
                classes.append(old[vod[d]])
            else:
                h = d - n  # least dart of a midpoint vertex is its S2 dart
                a, b = old[vod[h]], old[vod[alpha[h]]]
                classes.append(3 - a - b)
        classes = tuple(classes)
    return Triangulation(new_sigma, new_alpha, new_phi, classes).validate()


def are_isomorphic(m1: Hypermap, m2: Hypermap, with_witness: bool = False):
    """Test for a relabeling taking (sigma1, alpha1) to (sigma2, alpha2).

    With with_witness=True, returns (flag, mapping) where mapping[i] is the
    image of half-edge i, or None when no isomorphism exists.
    """
    n = m1.n
    if m2.n != n:
        return (False, None) if with_witness else False
    if n == 0:
        return (True, ()) if with_witness else True
    s1, a1, s2, a2 = m1.sigma, m1.alpha, m2.sigma, m2.alpha
    for target in range(n):
        img = [-1] * n
        img[0] = target
        used = [False] * n
        used[target] = True
        stack = [0]
        ok = True
        while stack and ok:
            x = stack.pop()
            for p, q in ((s1, s2), (a1, a2)):
                y, fy = p[x], q[img[x]]
                if img[y] == -1:
                    if used[fy]:
                        ok = False
                        break
                    img[y] = fy
                    used[fy] = True
                    stack.append(y)
                elif img[y] != fy:
                    ok = False
                    break
        if ok and all(v != -1 for v in img):
            witness = tuple(img)
            return (True, witness) if with_witness else True
    return (False, None) if with_witness else False


def relabel(m: Hypermap, mapping: Sequence[int]) -> Hypermap:
    """Apply a half-edge relabeling: new_perm = mapping . perm . mapping^-1."""
    inv = inverse(tuple(mapping))
    def push(p):
        return tuple(mapping[p[inv[x]]] for x in range(len(p)))
    out = Hypermap(push(m.sigma), push(m.alpha), push(m.phi))
    if isinstance(m, Triangulation):
        # vertex classes follow the sigma-cycle reindexing
        vod_old = m.vertex_of_dart()
        tri = Triangulation(out.sigma, out.alpha, out.phi, None)
        if m.vertex_classes is not None:
            classes = []
            for cyc in cycles(out.sigma):
                classes.append(m.vertex_classes[vod_old[inv[cyc[0]]]])
            tri = replace(tri, vertex_classes=tuple(classes))
        return tri
    return out
