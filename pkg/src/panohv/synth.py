"""Analytic renderer for synthetic H&V scenes.

Every surface is an exact H- or V-plane, so ground-truth labels and plane
parameters are known in closed form. Used as the oracle for extraction,
segmentation and metric tests, and by the CLI ``render`` command.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .labels import InstanceLabelMap
from .panogeom import (
    DepthMap,
    ImageGrid,
    PlaneParam,
    planar_depth_map,
    unit_rays,
    wrap_angle,
)


class RenderError(RuntimeError):
    pass


@dataclass
class Wall:
    """Vertical plane visible for scene-frame yaw in [u_start, u_end) (wrapping)."""

    theta: float
    o: float
    u_start: float = -math.pi
    u_end: float = math.pi

    @property
    def param(self) -> PlaneParam:
        return PlaneParam.vertical(self.theta, self.o)

    def full_turn(self) -> bool:
        return self.u_end - self.u_start >= 2 * math.pi - 1e-12


@dataclass
class Box:
    """Axis-aligned cuboid ``(xmin, xmax, ymin, ymax, zmin, zmax)``."""

    bounds: tuple[float, float, float, float, float, float]

    def contains_origin(self) -> bool:
        x0, x1, y0, y1, z0, z1 = self.bounds
        return x0 <= 0 <= x1 and y0 <= 0 <= y1 and z0 <= 0 <= z1


@dataclass
class SceneSpec:
    floor_z: float
    ceiling_z: float
    walls: list[Wall]
    boxes: list[Box] = field(default_factory=list)
    yaw: float = 0.0
    seed: int = 0

    def validate(self):
        if not self.floor_z < 0 < self.ceiling_z:
            raise ValueError("camera must lie between floor and ceiling")
        for b in self.boxes:
            if b.contains_origin():
                raise ValueError(f"box {b.bounds} contains the camera")
            if any(abs(x) <= 1e-6 for x in b.bounds):
                raise ValueError(f"box {b.bounds} has a face through the camera")

    def to_dict(self) -> dict:
        return {
            "floor_z": self.floor_z,
            "ceiling_z": self.ceiling_z,
            "walls": [vars(w) for w in self.walls],
            "boxes": [list(b.bounds) for b in self.boxes],
            "yaw": self.yaw,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SceneSpec":
        return cls(
            floor_z=float(d["floor_z"]),
            ceiling_z=float(d["ceiling_z"]),
            walls=[Wall(**w) for w in d["walls"]],
            boxes=[_box(b) for b in d.get("boxes", [])],
            yaw=float(d.get("yaw", 0.0)),
            seed=int(d.get("seed", 0)),
        )

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def loads(cls, text: str) -> "SceneSpec":
        return cls.from_dict(json.loads(text))


def _box(b) -> Box:
    if isinstance(b, dict) or len(b) != 6:
        raise ValueError(f"box must be [xmin, xmax, ymin, ymax, zmin, zmax], got {b!r}")
    return Box(tuple(float(x) for x in b))


def cuboid_room(xmin, xmax, ymin, ymax, floor_z, ceiling_z, boxes=(), yaw=0.0, seed=0) -> SceneSpec:
    """Closed box room; walls are infinite planes, the nearest hit clips them."""
    walls = [Wall(0.0, xmax), Wall(math.pi / 2, ymax), Wall(math.pi, -xmin), Wall(-math.pi / 2, -ymin)]
    return SceneSpec(floor_z, ceiling_z, walls, [Box(tuple(b)) for b in boxes], yaw, seed)


def random_room(seed: int, max_boxes: int = 3) -> SceneSpec:
    """Seeded cuboid room with 0..max_boxes floor-standing boxes."""
    rng = np.random.default_rng(seed)
    xmin, xmax = -rng.uniform(1.5, 3.0), rng.uniform(1.5, 3.0)
    ymin, ymax = -rng.uniform(1.5, 3.0), rng.uniform(1.5, 3.0)
    floor = -rng.uniform(1.3, 1.7)
    ceiling = rng.uniform(0.9, 1.5)
    boxes: list[tuple] = []
    n_boxes = int(rng.integers(0, max_boxes + 1))
    attempts = 0
    while len(boxes) < n_boxes and attempts < 200:
        attempts += 1
        sx, sy = rng.uniform(0.6, 1.2, size=2)
        h = rng.uniform(0.4, 0.9)
        # against a wall, clear of the camera
        side = int(rng.integers(0, 4))
        if side in (0, 2):
            x0 = xmax - sx if side == 0 else xmin
            y0 = rng.uniform(ymin, ymax - sy)
        else:
            y0 = ymax - sy if side == 1 else ymin
            x0 = rng.uniform(xmin, xmax - sx)
        b = (x0, x0 + sx, y0, y0 + sy, floor, floor + h)
        if _overlaps_camera(b, 0.8) or any(_boxes_touch(b, o) for o in boxes):
            continue
        boxes.append(b)
    return cuboid_room(xmin, xmax, ymin, ymax, floor, ceiling, boxes, seed=seed)


def _overlaps_camera(b, margin):
    x0, x1, y0, y1, *_ = b
    return x0 - margin < 0 < x1 + margin and y0 - margin < 0 < y1 + margin


def _boxes_touch(a, b, gap=0.3):
    return not (a[1] + gap < b[0] or b[1] + gap < a[0] or a[3] + gap < b[2] or b[3] + gap < a[2])


def _u_in_extent(u: np.ndarray, start: float, end: float) -> np.ndarray:
    span = end - start
    if span >= 2 * math.pi - 1e-12:
        return np.ones(u.shape, dtype=bool)
    return np.mod(u - start, 2 * math.pi) < span


def _surfaces(spec: SceneSpec):
    """Yield (param, hit_test) pairs; hit_test(points, u) -> bool mask."""
    yield PlaneParam.horizontal(spec.floor_z), None
    yield PlaneParam.horizontal(spec.ceiling_z), None
    for w in spec.walls:
        yield w.param, (lambda p, u, w=w: _u_in_extent(u, w.u_start, w.u_end))
    for b in spec.boxes:
        x0, x1, y0, y1, z0, z1 = b.bounds
        faces = [
            (0, x0, (1, 2), (y0, y1, z0, z1)),
            (0, x1, (1, 2), (y0, y1, z0, z1)),
            (1, y0, (0, 2), (x0, x1, z0, z1)),
            (1, y1, (0, 2), (x0, x1, z0, z1)),
            (2, z1, (0, 1), (x0, x1, y0, y1)),
        ]
        if z0 > spec.floor_z + 1e-9:
            faces.append((2, z0, (0, 1), (x0, x1, y0, y1)))
        for axis, val, (a, b_), (lo_a, hi_a, lo_b, hi_b) in faces:
            if axis == 2:
                param = PlaneParam.horizontal(val)
            else:
                theta = (0.0 if val > 0 else math.pi) if axis == 0 else (math.pi / 2 if val > 0 else -math.pi / 2)
                param = PlaneParam.vertical(theta, abs(val))

            def hit(p, u, a=a, b_=b_, lo_a=lo_a, hi_a=hi_a, lo_b=lo_b, hi_b=hi_b):
                eps = 1e-9
                return (
                    (p[..., a] >= lo_a - eps) & (p[..., a] <= hi_a + eps)
                    & (p[..., b_] >= lo_b - eps) & (p[..., b_] <= hi_b + eps)
                )

            yield param, hit


def _rotate(p: PlaneParam, yaw: float) -> PlaneParam:
    if p.kind.value == "H" or yaw == 0.0:
        return p
    return PlaneParam.vertical(wrap_angle(p.theta + yaw), p.offset)


def render_depth(spec: SceneSpec, grid: ImageGrid) -> tuple[DepthMap, InstanceLabelMap]:
    """Nearest-hit depth and per-surface ground-truth labels.

    Yaw that is a whole number of columns is applied as an exact column roll.
    """
    spec.validate()
    k = spec.yaw / grid.du
    k_int = int(round(k))
    if abs(k - k_int) < 1e-9:
        depth, labels, table = _render(spec, grid, 0.0)
        depth = np.roll(depth, k_int, axis=1)
        labels = np.roll(labels, k_int, axis=1)
        table = {i: _rotate(p, k_int * grid.du) for i, p in table.items()}
    else:
        depth, labels, table = _render(spec, grid, spec.yaw)
        table = {i: _rotate(p, spec.yaw) for i, p in table.items()}
    present = set(np.unique(labels).tolist()) - {0}
    table = {i: p for i, p in table.items() if i in present}
    return DepthMap(depth), InstanceLabelMap(labels, table)


def _render(spec: SceneSpec, grid: ImageGrid, yaw: float):
    rays = unit_rays(grid)
    if yaw:
        u, v = grid.angles()
        u = u - yaw
        cv = np.cos(v)
        rays = np.stack([cv * np.cos(u), cv * np.sin(u), np.sin(v)], axis=-1)
    u_scene = np.arctan2(rays[..., 1], rays[..., 0])
    best = np.full(grid.shape, np.inf)
    labels = np.zeros(grid.shape, dtype=np.int64)
    table = {}
    for sid, (param, hit_test) in enumerate(_surfaces(spec), start=1):
        table[sid] = param
        d = planar_depth_map(param, rays)
        ok = np.isfinite(d)
        if hit_test is not None:
            pts = np.where(ok, d, 0.0)[..., None] * rays
            ok &= hit_test(pts, u_scene)
        closer = ok & (d < best)
        best[closer] = d[closer]
        labels[closer] = sid
    if not np.isfinite(best).all():
        raise RenderError(f"{int((~np.isfinite(best)).sum())} rays hit no surface")
    return best, labels, table


def perturb_depth(depth: DepthMap, sigma: float, seed: int) -> DepthMap:
    if sigma < 0:
        raise ValueError("sigma must be >= 0")
    if sigma == 0:
        return DepthMap(depth.values.copy(), depth.valid.copy())
    rng = np.random.default_rng(seed)
    noisy = depth.values + rng.normal(0.0, sigma, size=depth.shape)
    noisy = np.where(depth.valid, np.maximum(noisy, 1e-6), depth.values)
    return DepthMap(noisy, depth.valid.copy())
