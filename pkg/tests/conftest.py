"""Shared builders for the test suite."""

import random

from belyi.hypermap import Triangulation, chain, inverse


def triangulation_from_faces(faces):
    """Triangulation of a simplicial complex given as CCW vertex triples.

    Dart 3f + i is the directed edge from corner i of face f to the next
    corner; each ordered vertex pair must occur exactly once.
    """
    n = 3 * len(faces)
    phi = [0] * n
    pair = {}
    for f, (u, v, w) in enumerate(faces):
        for i, (a, b) in enumerate(((u, v), (v, w), (w, u))):
            d = 3 * f + i
            phi[d] = 3 * f + (i + 1) % 3
            if (a, b) in pair:
                raise ValueError(f"edge {a}->{b} appears twice")
            pair[(a, b)] = d
    alpha = [0] * n
    for (a, b), d in pair.items():
        if (b, a) not in pair:
            raise ValueError(f"edge {a}->{b} has no partner")
        alpha[d] = pair[(b, a)]
    phi = tuple(phi)
    alpha = tuple(alpha)
    sigma = chain(inverse(phi), alpha)
    return Triangulation(sigma, alpha, phi)


TETRAHEDRON_FACES = [(0, 1, 2), (0, 2, 3), (0, 3, 1), (1, 3, 2)]


def tetrahedron():
    return triangulation_from_faces(TETRAHEDRON_FACES)


def random_sphere_triangulation(num_vertices, seed):
    """Random triangulated sphere grown from the tetrahedron by repeatedly
    placing a new vertex inside a randomly chosen face."""
    if num_vertices < 4:
        raise ValueError("need at least 4 vertices")
    rng = random.Random(seed)
    faces = list(TETRAHEDRON_FACES)
    for w in range(4, num_vertices):
        f = rng.randrange(len(faces))
        u, v, x = faces.pop(f)
        faces += [(u, v, w), (v, x, w), (x, u, w)]
    return triangulation_from_faces(faces)
