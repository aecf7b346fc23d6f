"""256-case cube triangulation table, generated at import.

Corner c of a unit cube sits at ((c >> 0) & 1, (c >> 1) & 1, (c >> 2) & 1);
bit c of a configuration index is set when that corner is inside
(value < iso).  Twelve edges are listed in EDGE_CORNERS.

The table is built by tracing the isosurface boundary across cube faces:
on each face the cut edges pair up (when all four face edges are cut, the
pairing separates the two diagonal inside corners — a fixed, sign-only
rule, so the two cubes sharing a face always agree), the pairings chain
into closed loops, and each loop is triangulated with its winding
oriented toward the outside (positive field).  Because the pairing rule
depends only on the shared face's signs, patches of neighboring cubes
stitch edge-to-edge on every sign-consistent field.

Loop triangulation never places a diagonal between two cut edges that lie
on a common cube face: such a pair can also be referenced by the
neighboring cube across that face, and only the face pairing (which makes
the pair loop-adjacent) keeps the two patches from meeting in a
non-manifold pinch.  Any pair of grid edges contained in two different
cubes necessarily lies on the face those cubes share, so diagonals between
face-disjoint cut edges are private to one cube; with the restriction in
place every interior mesh edge is used by exactly two triangles.
"""

from __future__ import annotations

import numpy as np

CORNER_OFFSETS = np.array(
    [[(c >> 0) & 1, (c >> 1) & 1, (c >> 2) & 1] for c in range(8)], dtype=np.int64
)

# 12 edges as (corner_a, corner_b) with a < b, sorted lexicographically
EDGE_CORNERS = np.array(
    sorted(
        (c, c | (1 << axis))
        for c in range(8)
        for axis in range(3)
        if not c & (1 << axis)
    ),
    dtype=np.int64,
)

# axis along which each edge runs (the differing corner bit)
EDGE_AXIS = np.array(
    [int(np.log2(a ^ b)) for a, b in EDGE_CORNERS], dtype=np.int64
)

_EDGE_ID = {(int(a), int(b)): e for e, (a, b) in enumerate(EDGE_CORNERS)}


def _face_cycles():
    """Each face as its 4 corners in cyclic order."""
    faces = []
    for axis in range(3):
        u, v = [a for a in range(3) if a != axis]
        for side in (0, 1):
            cyc = []
            for du, dv in ((0, 0), (1, 0), (1, 1), (0, 1)):
                coords = [0, 0, 0]
                coords[axis] = side
                coords[u] = du
                coords[v] = dv
                cyc.append(coords[0] | (coords[1] << 1) | (coords[2] << 2))
            faces.append(cyc)
    return faces


_FACES = _face_cycles()


def _loops_for_config(config: int) -> list[list[int]]:
    inside = [(config >> c) & 1 for c in range(8)]
    links: dict[int, list[int]] = {}

    def connect(e1: int, e2: int) -> None:
        links.setdefault(e1, []).append(e2)
        links.setdefault(e2, []).append(e1)

    for cyc in _FACES:
        quad = [(cyc[i], cyc[(i + 1) % 4]) for i in range(4)]
        cut = [i for i, (a, b) in enumerate(quad) if inside[a] != inside[b]]
        ids = [_EDGE_ID[(min(a, b), max(a, b))] for a, b in quad]
        if len(cut) == 2:
            connect(ids[cut[0]], ids[cut[1]])
        elif len(cut) == 4:
            # both diagonals mixed: keep each inside corner on its own arc
            if inside[cyc[0]]:  # corners 0 and 2 of the cycle are inside
                connect(ids[3], ids[0])
                connect(ids[1], ids[2])
            else:  # corners 1 and 3 are inside
                connect(ids[0], ids[1])
                connect(ids[2], ids[3])
    loops = []
    seen: set[int] = set()
    for start in sorted(links):
        if start in seen:
            continue
        loop = [start]
        seen.add(start)
        prev, cur = None, start
        while True:
            a, b = links[cur]
            nxt = b if a == prev else a
            if nxt == start:
                break
            loop.append(nxt)
            seen.add(nxt)
            prev, cur = cur, nxt
        loops.append(loop)
    return loops


def _orient_loop(loop: list[int], config: int) -> list[int]:
    """Order the loop so fan triangles wind toward the positive side."""
    mids = (CORNER_OFFSETS[EDGE_CORNERS[loop, 0]] +
            CORNER_OFFSETS[EDGE_CORNERS[loop, 1]]) / 2.0
    # Newell normal of the midpoint polygon
    normal = np.zeros(3)
    for i in range(len(loop)):
        p, q = mids[i], mids[(i + 1) % len(loop)]
        normal += np.cross(p, q)
    inside_pts = [
        CORNER_OFFSETS[c]
        for e in loop
        for c in EDGE_CORNERS[e]
        if (config >> c) & 1
    ]
    outward = mids.mean(axis=0) - np.mean(inside_pts, axis=0)
    if float(normal @ outward) < 0.0:
        loop = [loop[0]] + loop[:0:-1]
    return loop


# the two faces each edge belongs to; edges sharing a face may only be
# joined by that face's pairing, never by a triangulation diagonal
_EDGE_FACES = [
    frozenset(i for i, cyc in enumerate(_FACES) if a in cyc and b in cyc)
    for a, b in EDGE_CORNERS.tolist()
]


def _triangulate_loop(loop: list[int]) -> list[tuple[int, int, int]]:
    """Triangulate the oriented loop using only face-disjoint diagonals.

    Interval dynamic programming over the polygon; candidate splits are
    scored by how many diagonals join face-sharing cut edges and the
    first zero-cost triangulation (preferring the fan from loop[0]) is
    taken.  A zero-cost choice exists for every configuration, which the
    build asserts.
    """
    n = len(loop)

    def diagonal_cost(a: int, b: int) -> int:
        if (b - a) % n in (1, n - 1):
            return 0  # loop edge, not a diagonal
        return 1 if _EDGE_FACES[loop[a]] & _EDGE_FACES[loop[b]] else 0

    best: dict[tuple[int, int], tuple[int, tuple]] = {}

    def solve(i: int, j: int) -> tuple[int, tuple]:
        if j - i < 2:
            return 0, ()
        if (i, j) not in best:
            out = None
            for k in range(j - 1, i, -1):  # high k first keeps the plain fan
                ci, ti = solve(i, k)
                cj, tj = solve(k, j)
                cost = ci + cj + diagonal_cost(i, k) + diagonal_cost(k, j)
                if out is None or cost < out[0]:
                    out = (cost, ti + ((i, k, j),) + tj)
            best[(i, j)] = out
        return best[(i, j)]

    cost, tris = solve(0, n - 1)
    assert cost == 0, "loop admits no face-disjoint triangulation"
    return [(loop[i], loop[k], loop[j]) for i, k, j in tris]


def _build_tri_table() -> list[tuple[int, ...]]:
    table = []
    for config in range(256):
        tris: list[int] = []
        for loop in _loops_for_config(config):
            for tri in _triangulate_loop(_orient_loop(loop, config)):
                tris += tri
        table.append(tuple(tris))
    return table


TRI_TABLE = _build_tri_table()
