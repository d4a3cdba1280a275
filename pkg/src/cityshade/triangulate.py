"""Ear-clipping triangulation for building footprints.

Handles simple polygons with optional holes (courtyards). Holes are spliced
into the outer ring through bridge edges before clipping, the classic earcut
approach. Collinear boundary vertices are kept: the roof triangulation must
reference every footprint vertex so wall and roof edges pair up exactly in
the extruded solid. Degenerate (zero-area) ears are emitted rather than
dropped, which keeps the edge topology watertight; downstream rasterizers
and ray tests skip them by their area.
"""

from __future__ import annotations

import math

import numpy as np

__all__ = ["ring_area", "triangulate_polygon"]


def ring_area(pts) -> float:
    """Signed shoelace area; positive for counter-clockwise rings."""
    p = np.asarray(pts, dtype=np.float64)
    x, y = p[:, 0], p[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


class _Node:
    __slots__ = ("x", "y", "idx")

    def __init__(self, x: float, y: float, idx: int):
        self.x = x
        self.y = y
        self.idx = idx


def _clean_ring(pts, offset: int) -> list[_Node]:
    nodes = []
    for i, (x, y) in enumerate(pts):
        if nodes and abs(nodes[-1].x - x) < 1e-12 and abs(nodes[-1].y - y) < 1e-12:
            continue
        nodes.append(_Node(float(x), float(y), offset + i))
    if len(nodes) > 1 and abs(nodes[0].x - nodes[-1].x) < 1e-12 and abs(nodes[0].y - nodes[-1].y) < 1e-12:
        nodes.pop()
    return nodes


def _cross(o: _Node, a: _Node, b: _Node) -> float:
    return (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x)


def _point_in_tri(px, py, a: _Node, b: _Node, c: _Node, eps: float) -> bool:
    d1 = (b.x - a.x) * (py - a.y) - (b.y - a.y) * (px - a.x)
    d2 = (c.x - b.x) * (py - b.y) - (c.y - b.y) * (px - b.x)
    d3 = (a.x - c.x) * (py - c.y) - (a.y - c.y) * (px - c.x)
    return d1 > eps and d2 > eps and d3 > eps


def _find_bridge(outer: list[_Node], hole_pt: _Node) -> int:
    """Index of the outer vertex to connect hole_pt to, earcut style.

    Casts a ray toward -x from the hole's leftmost vertex, takes the nearest
    crossed outer edge, then refines the candidate against reflex vertices
    sitting inside the bridge triangle.
    """
    hx, hy = hole_pt.x, hole_pt.y
    qx = -math.inf
    m = -1
    n = len(outer)
    for i in range(n):
        p, q = outer[i], outer[(i + 1) % n]
        if (p.y >= hy >= q.y or q.y >= hy >= p.y) and p.y != q.y:
            x = p.x + (hy - p.y) * (q.x - p.x) / (q.y - p.y)
            if x <= hx and x > qx:
                qx = x
                m = i if p.x < q.x else (i + 1) % n
                if x == hx:
                    return m
    if m < 0:
        raise ValueError("hole lies outside its polygon")
    # candidate may be hidden behind a reflex vertex inside the triangle
    mp = outer[m]
    tan_min = math.inf
    for i in range(n):
        p = outer[i]
        if p is mp or not (min(hx, mp.x) <= p.x <= hx):
            continue
        ax = hx if hy < mp.y else qx
        cx = qx if hy < mp.y else hx
        if _point_in_tri(p.x, p.y, _Node(ax, hy, -1), _Node(mp.x, mp.y, -1), _Node(cx, hy, -1), -1e-12):
            t = abs(hy - p.y) / (hx - p.x) if hx != p.x else math.inf
            if t < tan_min or (t == tan_min and p.x > mp.x):
                tan_min = t
                m = i
                mp = outer[m]
    return m


def _splice_hole(outer: list[_Node], hole: list[_Node]) -> list[_Node]:
    # leftmost hole vertex, ties broken by y for determinism
    k = min(range(len(hole)), key=lambda i: (hole[i].x, hole[i].y))
    hole = hole[k:] + hole[:k]
    b = _find_bridge(outer, hole[0])
    bridge_out = _Node(outer[b].x, outer[b].y, outer[b].idx)
    bridge_hole = _Node(hole[0].x, hole[0].y, hole[0].idx)
    return outer[: b + 1] + hole + [bridge_hole, bridge_out] + outer[b + 1 :]


def _clip_ears(ring: list[_Node], scale: float) -> list[tuple[int, int, int]]:
    tris: list[tuple[int, int, int]] = []
    verts = list(ring)
    eps = 1e-12 * scale * scale
    guard = 0
    while len(verts) > 3:
        n = len(verts)
        clipped = False
        for i in range(n):
            a, b, c = verts[(i - 1) % n], verts[i], verts[(i + 1) % n]
            if _cross(a, b, c) < -eps:
                continue  # reflex corner, not an ear
            blocked = False
            for p in verts:
                if p is a or p is b or p is c:
                    continue
                if _point_in_tri(p.x, p.y, a, b, c, eps):
                    blocked = True
                    break
            if blocked:
                continue
            tris.append((a.idx, b.idx, c.idx))
            del verts[i]
            clipped = True
            break
        if not clipped:
            # numerically stuck; clip the flattest corner to guarantee progress
            guard += 1
            if guard > len(ring):
                raise ValueError("ear clipping failed: polygon is degenerate or self-intersecting")
            n = len(verts)
            i = min(range(n), key=lambda j: abs(_cross(verts[(j - 1) % n], verts[j], verts[(j + 1) % n])))
            tris.append((verts[(i - 1) % n].idx, verts[i].idx, verts[(i + 1) % n].idx))
            del verts[i]
    tris.append((verts[0].idx, verts[1].idx, verts[2].idx))
    return tris


def triangulate_polygon(exterior, holes=()) -> list[tuple[int, int, int]]:
    """Triangulate a polygon, returning CCW index triples.

    Indices refer to the concatenation of the input rings in order, so the
    caller can map them straight onto its own vertex buffer. The exterior
    must wind counter-clockwise and holes clockwise; orientation is the
    caller's contract and is not fixed up here.
    """
    ring = _clean_ring(exterior, 0)
    if len(ring) < 3:
        raise ValueError("polygon exterior needs at least 3 distinct vertices")
    span = max(
        max(p.x for p in ring) - min(p.x for p in ring),
        max(p.y for p in ring) - min(p.y for p in ring),
    )
    if span <= 0:
        raise ValueError("polygon exterior is degenerate")
    offset = len(exterior)
    cleaned_holes = []
    for h in holes:
        hn = _clean_ring(h, offset)
        offset += len(h)
        if len(hn) >= 3:
            cleaned_holes.append(hn)
    # splice left-to-right so earlier bridges cannot occlude later ones
    for hole in sorted(cleaned_holes, key=lambda h: min(p.x for p in h)):
        ring = _splice_hole(ring, hole)
    return _clip_ears(ring, span)
