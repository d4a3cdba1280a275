"""Built-in synthetic scenes for benchmarks, demos, and tests."""

from __future__ import annotations

import math

import numpy as np

from .scene import Building, CityScene

NYC_ANCHOR = (40.7829, -73.9654)


def desk_scene(
    seed: int = 0,
    buildings: int = 820,
    extent: float = 1000.0,
    anchor: tuple[float, float] = NYC_ANCHOR,
) -> CityScene:
    """A kilometer-wide field of low-rise pavilions, desk-model scale.

    Each box contributes 12 triangles, so the default lands near ten
    thousand. Footprints stay a few meters across and heights one to two
    stories: small casters, lots of them, which is the regime where
    rebuilding a depth map every minute hurts the most.
    """
    rng = np.random.default_rng(seed)
    side = math.ceil(math.sqrt(buildings))
    pitch = extent / side
    out = []
    for k in range(buildings):
        gy, gx = divmod(k, side)
        cx = (gx + 0.5) * pitch - extent / 2 + rng.uniform(-0.2, 0.2) * pitch
        cy = (gy + 0.5) * pitch - extent / 2 + rng.uniform(-0.2, 0.2) * pitch
        hx = rng.uniform(1.2, 2.2)
        hy = rng.uniform(1.2, 2.2)
        height = float(rng.uniform(4.5, 9.5))
        ring = np.array(
            [[cx - hx, cy - hy], [cx + hx, cy - hy], [cx + hx, cy + hy], [cx - hx, cy + hy]]
        )
        out.append(Building(k + 1, height, [ring], name=f"tower {k + 1}"))
    return CityScene(out, anchor=anchor)


def box_scene(
    boxes: int,
    seed: int = 0,
    extent: float = 200.0,
    anchor: tuple[float, float] | None = NYC_ANCHOR,
) -> CityScene:
    """Random axis-aligned boxes, non-degenerate but free to overlap shadows."""
    rng = np.random.default_rng(seed)
    out = []
    for k in range(boxes):
        cx, cy = rng.uniform(-extent / 2, extent / 2, size=2)
        hx = rng.uniform(3.0, 15.0)
        hy = rng.uniform(3.0, 15.0)
        height = float(rng.uniform(5.0, 60.0))
        ring = np.array(
            [[cx - hx, cy - hy], [cx + hx, cy - hy], [cx + hx, cy + hy], [cx - hx, cy + hy]]
        )
        out.append(Building(k + 1, height, [ring], name=f"box {k + 1}"))
    return CityScene(out, anchor=anchor)


def demo_block(anchor: tuple[float, float] = NYC_ANCHOR) -> CityScene:
    """A hand-placed city block: towers, a slab, an L, and a courtyard.

    Small enough to accumulate interactively, varied enough to exercise the
    triangulator (concave outline, interior hole) and the ranking code.
    """
    sq = lambda cx, cy, half: np.array(
        [[cx - half, cy - half], [cx + half, cy - half], [cx + half, cy + half], [cx - half, cy + half]]
    )
    ell = np.array(
        [[-90.0, -20.0], [-50.0, -20.0], [-50.0, 0.0], [-70.0, 0.0], [-70.0, 40.0], [-90.0, 40.0]]
    )
    court_outer = sq(60.0, 10.0, 30.0)
    court_inner = sq(60.0, 10.0, 12.0)[::-1].copy()
    buildings = [
        Building(1, 95.0, [sq(-20.0, 35.0, 12.0)], name="north tower"),
        Building(2, 60.0, [sq(10.0, -40.0, 10.0)], name="south tower"),
        Building(3, 24.0, [np.array([[-35.0, -60.0], [35.0, -60.0], [35.0, -52.0], [-35.0, -52.0]])], name="row slab"),
        Building(4, 38.0, [ell], name="west ell"),
        Building(5, 22.0, [court_outer, court_inner], name="courtyard block"),
        Building(6, 130.0, [sq(15.0, 75.0, 8.0)], name="spire"),
    ]
    return CityScene(buildings, anchor=anchor)
