"""Equirectangular geometry shared by every other module.

Conventions: right-handed frame, z up (gravity axis), camera at the origin,
``u = 0`` looks along +x. Row 0 is the top of the panorama (``v`` near
+pi/2), pixel centres sit at half-integer offsets and columns wrap.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

EPS_OFFSET = 1e-6
EPS_RAY = 1e-9


class DegenerateGeometryError(ValueError):
    """Raised when a plane would have (near) zero offset or is otherwise ill-posed."""


class PlaneKind(str, Enum):
    H = "H"
    V = "V"


@dataclass(frozen=True)
class ImageGrid:
    height: int
    width: int

    def __post_init__(self):
        if self.height < 2:
            raise ValueError(f"grid height must be >= 2, got {self.height}")
        if self.width != 2 * self.height:
            raise ValueError(f"equirectangular grid needs width == 2*height, got {self.height}x{self.width}")

    @classmethod
    def from_shape(cls, shape) -> "ImageGrid":
        return cls(int(shape[0]), int(shape[1]))

    @property
    def shape(self) -> tuple[int, int]:
        return (self.height, self.width)

    @property
    def size(self) -> int:
        return self.height * self.width

    @property
    def du(self) -> float:
        """Yaw step between neighbouring columns."""
        return 2 * math.pi / self.width

    def u_of_col(self) -> np.ndarray:
        return ((np.arange(self.width) + 0.5) / self.width - 0.5) * 2 * np.pi

    def v_of_row(self) -> np.ndarray:
        return (0.5 - (np.arange(self.height) + 0.5) / self.height) * np.pi

    def angles(self) -> tuple[np.ndarray, np.ndarray]:
        """Full (H, W) maps of u and v."""
        u = np.broadcast_to(self.u_of_col()[None, :], self.shape)
        v = np.broadcast_to(self.v_of_row()[:, None], self.shape)
        return u, v

    def scaled_min_cc(self, base: int = 1000) -> int:
        """``base`` pixels at 512x1024, scaled by image area."""
        return max(1, int(round(base * self.size / (512 * 1024))))


@dataclass(frozen=True)
class SphericalCoord:
    u: float
    v: float


@dataclass(frozen=True)
class PlaneParam:
    """Plane ``{p : n_hat . p = |n|}`` stored as ``n = offset * n_hat``."""

    n: tuple[float, float, float]
    kind: PlaneKind

    def __post_init__(self):
        n = tuple(float(x) for x in self.n)
        object.__setattr__(self, "n", n)
        object.__setattr__(self, "kind", PlaneKind(self.kind))
        if not all(math.isfinite(x) for x in n):
            raise DegenerateGeometryError(f"non-finite plane parameter {n}")
        if self.kind is PlaneKind.H:
            if n[0] != 0.0 or n[1] != 0.0:
                raise ValueError(f"H-plane must be [0, 0, z], got {n}")
            if abs(n[2]) <= EPS_OFFSET:
                raise DegenerateGeometryError("H-plane offset is zero")
        else:
            if n[2] != 0.0:
                raise ValueError(f"V-plane must have zero z component, got {n}")
            if math.hypot(n[0], n[1]) <= EPS_OFFSET:
                raise DegenerateGeometryError("V-plane offset is zero")

    @classmethod
    def horizontal(cls, z: float) -> "PlaneParam":
        return cls((0.0, 0.0, z), PlaneKind.H)

    @classmethod
    def vertical(cls, theta: float, o: float) -> "PlaneParam":
        if not o > EPS_OFFSET:
            raise DegenerateGeometryError(f"V-plane offset must be positive, got {o}")
        return cls((o * math.cos(theta), o * math.sin(theta), 0.0), PlaneKind.V)

    @property
    def vec(self) -> np.ndarray:
        return np.asarray(self.n, dtype=float)

    @property
    def offset(self) -> float:
        return float(np.linalg.norm(self.vec))

    @property
    def normal(self) -> np.ndarray:
        return self.vec / self.offset

    @property
    def theta(self) -> float:
        if self.kind is not PlaneKind.V:
            raise AttributeError("only V-planes have an orientation angle")
        return math.atan2(self.n[1], self.n[0])

    @property
    def z(self) -> float:
        if self.kind is not PlaneKind.H:
            raise AttributeError("only H-planes have a height")
        return self.n[2]

    def distance(self, points: np.ndarray) -> np.ndarray:
        """Unsigned point-to-plane distance for an (..., 3) array."""
        return np.abs(np.asarray(points) @ self.normal - self.offset)

    def to_dict(self) -> dict:
        return {"kind": self.kind.value, "n": list(self.n)}

    @classmethod
    def from_dict(cls, d: dict) -> "PlaneParam":
        return cls(tuple(d["n"]), PlaneKind(d["kind"]))


@dataclass
class DepthMap:
    values: np.ndarray
    valid: np.ndarray = field(default=None)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        finite = np.isfinite(self.values) & (np.nan_to_num(self.values, nan=0.0) > 0)
        if self.valid is None:
            self.valid = finite
        else:
            self.valid = np.asarray(self.valid, dtype=bool) & finite
        self.grid = ImageGrid.from_shape(self.values.shape)

    @property
    def shape(self):
        return self.values.shape

    def points(self) -> np.ndarray:
        """(H, W, 3) point cloud; invalid pixels are NaN."""
        d = np.where(self.valid, self.values, np.nan)
        return d[..., None] * unit_rays(self.grid)


def wrap_angle(a):
    """Wrap into (-pi, pi]; -pi itself maps to +pi."""
    w = np.pi - np.mod(np.pi - np.asarray(a, dtype=float), 2 * np.pi)
    if np.ndim(w) == 0:
        return float(w)
    return w


def circular_distance(a, b):
    return np.abs(wrap_angle(np.asarray(a) - np.asarray(b)))


def pixel_to_angles(row: int, col: int, grid: ImageGrid) -> SphericalCoord:
    if not (0 <= row < grid.height and 0 <= col < grid.width):
        raise IndexError(f"pixel ({row}, {col}) outside {grid.height}x{grid.width} grid")
    u = ((col + 0.5) / grid.width - 0.5) * 2 * math.pi
    v = (0.5 - (row + 0.5) / grid.height) * math.pi
    return SphericalCoord(u, v)


def ray(c: SphericalCoord) -> np.ndarray:
    cv = math.cos(c.v)
    return np.array([cv * math.cos(c.u), cv * math.sin(c.u), math.sin(c.v)])


def unit_rays(grid: ImageGrid) -> np.ndarray:
    u, v = grid.angles()
    cv = np.cos(v)
    return np.stack([cv * np.cos(u), cv * np.sin(u), np.sin(v)], axis=-1)


def unproject(d: float, c: SphericalCoord) -> np.ndarray:
    if not (math.isfinite(d) and d > 0):
        raise ValueError(f"depth must be finite and positive, got {d}")
    return d * ray(c)


def h_offset(d, v):
    """Signed height of the H-plane through the pixel."""
    return d * np.sin(v)


def v_offset(d, c: SphericalCoord, theta):
    """Offset of the V-plane with orientation ``theta`` through the pixel."""
    return d * np.cos(c.v) * (np.cos(theta) * np.cos(c.u) + np.sin(theta) * np.sin(c.u))


def v_offset_map(d, u, v, theta):
    """Array form of :func:`v_offset`; equals ``d cos(v) cos(theta - u)``."""
    return d * np.cos(v) * (np.cos(theta) * np.cos(u) + np.sin(theta) * np.sin(u))


def plane_from_pixel(d: float, c: SphericalCoord, theta: float | None = None) -> PlaneParam:
    """H-plane (``theta is None``) or V-plane through the pixel's 3D point."""
    if not (math.isfinite(d) and d > 0):
        raise ValueError(f"depth must be finite and positive, got {d}")
    if theta is None:
        z = float(h_offset(d, c.v))
        if abs(z) <= EPS_OFFSET:
            raise DegenerateGeometryError(f"horizon ray gives no H-plane (z={z})")
        p = PlaneParam.horizontal(z)
    else:
        o = float(v_offset(d, c, theta))
        if o <= EPS_OFFSET:
            raise DegenerateGeometryError(f"grazing or back-facing V-plane (o={o})")
        p = PlaneParam.vertical(theta, o)
    # the pixel's own ray must still hit the plane
    if float(p.vec @ ray(c)) <= EPS_RAY:
        raise DegenerateGeometryError("ray grazes the plane through its own point")
    return p


def planar_depth(p: PlaneParam, c: SphericalCoord) -> float | None:
    n = p.vec
    denom = float(n @ ray(c))
    if denom <= EPS_RAY:
        return None
    return float(n @ n) / denom


def planar_depth_map(p: PlaneParam, rays: np.ndarray) -> np.ndarray:
    """Depth of ``p`` along each ray; NaN where the plane is missed."""
    n = p.vec
    denom = rays @ n
    with np.errstate(divide="ignore", invalid="ignore"):
        d = (n @ n) / denom
    return np.where(denom > EPS_RAY, d, np.nan)


def yaw_invariant(theta, u):
    return wrap_angle(np.asarray(theta) - np.asarray(u))


def yaw_restore(theta_prime, u):
    return wrap_angle(np.asarray(theta_prime) + np.asarray(u))


def _check_map(m: np.ndarray, grid: ImageGrid):
    if m.shape != grid.shape:
        raise ValueError(f"map shape {m.shape} does not match grid {grid.shape}")


def yaw_invariant_map(theta_map: np.ndarray, grid: ImageGrid) -> np.ndarray:
    theta_map = np.asarray(theta_map, dtype=float)
    _check_map(theta_map, grid)
    return yaw_invariant(theta_map, grid.u_of_col()[None, :])


def yaw_restore_map(theta_prime_map: np.ndarray, grid: ImageGrid) -> np.ndarray:
    theta_prime_map = np.asarray(theta_prime_map, dtype=float)
    _check_map(theta_prime_map, grid)
    return yaw_restore(theta_prime_map, grid.u_of_col()[None, :])


def add_yaw(theta_map: np.ndarray, k: int, grid: ImageGrid) -> np.ndarray:
    """Orientation map of the same scene seen after a yaw of ``k`` columns (not shifted)."""
    return wrap_angle(np.asarray(theta_map) + k * grid.du)
