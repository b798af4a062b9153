"""Pinhole camera model with rational lens distortion.

Conventions used throughout the package:

- World points are plain float arrays of shape (3,) or (n, 3).
- A camera maps a world point x to camera coordinates w = R x + t, then to
  the image plane by perspective division and the distortion model, then to
  pixels through the intrinsics (f_x, f_y, c_x, c_y); skew is fixed at 0.
- Euler angles compose as R = R_z(gamma) @ R_y(beta) @ R_x(alpha)
  (extrinsic x-y-z order). Angles are radians, translations world units.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np


class SingularDistortionError(ValueError):
    """Rational distortion denominator vanished at the evaluated point."""


class BehindCameraError(ValueError):
    """World point is at or behind the camera's principal plane."""


@dataclass(frozen=True)
class CameraIntrinsics:
    """Focal lengths and principal point, all in pixels."""

    fx: float
    fy: float
    cx: float
    cy: float

    def __post_init__(self):
        vals = (self.fx, self.fy, self.cx, self.cy)
        if not all(np.isfinite(vals)):
            raise ValueError("intrinsics must be finite")
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError(f"focal lengths must be positive, got fx={self.fx}, fy={self.fy}")

    def matrix(self) -> np.ndarray:
        """The 3x3 camera matrix."""
        return np.array(
            [[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]]
        )


@dataclass(frozen=True)
class Distortion:
    """Rational radial (k1..k6) plus tangential (p1, p2) coefficients.

    All-zero coefficients give the identity mapping.
    """

    k1: float = 0.0
    k2: float = 0.0
    k3: float = 0.0
    k4: float = 0.0
    k5: float = 0.0
    k6: float = 0.0
    p1: float = 0.0
    p2: float = 0.0

    def __post_init__(self):
        if not all(np.isfinite(self.coefficients())):
            raise ValueError("distortion coefficients must be finite")

    def coefficients(self) -> tuple[float, ...]:
        return (self.k1, self.k2, self.k3, self.k4, self.k5, self.k6, self.p1, self.p2)

    def is_zero(self) -> bool:
        return all(c == 0.0 for c in self.coefficients())


@dataclass(frozen=True)
class CameraPose:
    """Extrinsic pose: Euler angles (radians) and translation (world units)."""

    alpha: float = 0.0
    beta: float = 0.0
    gamma: float = 0.0
    tx: float = 0.0
    ty: float = 0.0
    tz: float = 0.0

    def __post_init__(self):
        if not all(np.isfinite((self.alpha, self.beta, self.gamma, self.tx, self.ty, self.tz))):
            raise ValueError("pose parameters must be finite")

    def rotation(self) -> np.ndarray:
        return rotation_from_euler(self.alpha, self.beta, self.gamma)

    def translation(self) -> np.ndarray:
        return np.array([self.tx, self.ty, self.tz])

    def center(self) -> np.ndarray:
        """Camera center in world coordinates (-R^T t)."""
        return -self.rotation().T @ self.translation()


@dataclass(frozen=True)
class CameraParams:
    """Full camera: intrinsics, pose and distortion."""

    intrinsics: CameraIntrinsics
    pose: CameraPose = field(default_factory=CameraPose)
    distortion: Distortion = field(default_factory=Distortion)


# ---------------------------------------------------------------------------
# Rotations
# ---------------------------------------------------------------------------


def rotation_from_euler(alpha: float, beta: float, gamma: float) -> np.ndarray:
    """Rotation matrix R = R_z(gamma) @ R_y(beta) @ R_x(alpha).

    The result is orthonormal with determinant +1 to machine precision.
    """
    ca, sa = np.cos(alpha), np.sin(alpha)
    cb, sb = np.cos(beta), np.sin(beta)
    cg, sg = np.cos(gamma), np.sin(gamma)
    rx = np.array([[1, 0, 0], [0, ca, -sa], [0, sa, ca]])
    ry = np.array([[cb, 0, sb], [0, 1, 0], [-sb, 0, cb]])
    rz = np.array([[cg, -sg, 0], [sg, cg, 0], [0, 0, 1]])
    return rz @ ry @ rx


def rotation_derivatives(alpha: float, beta: float, gamma: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Partial derivatives of rotation_from_euler w.r.t. each angle."""
    ca, sa = np.cos(alpha), np.sin(alpha)
    cb, sb = np.cos(beta), np.sin(beta)
    cg, sg = np.cos(gamma), np.sin(gamma)
    rx = np.array([[1, 0, 0], [0, ca, -sa], [0, sa, ca]])
    ry = np.array([[cb, 0, sb], [0, 1, 0], [-sb, 0, cb]])
    rz = np.array([[cg, -sg, 0], [sg, cg, 0], [0, 0, 1]])
    drx = np.array([[0, 0, 0], [0, -sa, -ca], [0, ca, -sa]])
    dry = np.array([[-sb, 0, cb], [0, 0, 0], [-cb, 0, -sb]])
    drz = np.array([[-sg, -cg, 0], [cg, -sg, 0], [0, 0, 0]])
    return rz @ ry @ drx, rz @ dry @ rx, drz @ ry @ rx


# ---------------------------------------------------------------------------
# Projection
# ---------------------------------------------------------------------------

_MIN_DEPTH = 1e-9
_MIN_DENOMINATOR = 1e-12


def apply_distortion(xn: np.ndarray, distortion: Distortion) -> np.ndarray:
    """Apply the rational + tangential distortion to normalized coordinates.

    ``xn`` has shape (..., 2). With r^2 = x'^2 + y'^2 the radial factor is
    (1 + k1 r^2 + k2 r^4 + k3 r^6) / (1 + k4 r^2 + k5 r^4 + k6 r^6), and the
    tangential terms follow the usual two-coefficient model.
    """
    xn = np.asarray(xn, dtype=np.float64)
    x, y = xn[..., 0], xn[..., 1]
    r2 = x * x + y * y
    d = distortion
    num = 1.0 + r2 * (d.k1 + r2 * (d.k2 + r2 * d.k3))
    den = 1.0 + r2 * (d.k4 + r2 * (d.k5 + r2 * d.k6))
    if np.any(np.abs(den) <= _MIN_DENOMINATOR):
        raise SingularDistortionError("rational distortion denominator is singular")
    rho = num / den
    xy = x * y
    xd = x * rho + 2.0 * d.p1 * xy + d.p2 * (r2 + 2.0 * x * x)
    yd = y * rho + d.p1 * (r2 + 2.0 * y * y) + 2.0 * d.p2 * xy
    return np.stack([xd, yd], axis=-1)


def project(camera: CameraParams, x) -> np.ndarray:
    """Project world point(s) to pixel coordinates (u, v).

    Accepts a single (3,) point or an (n, 3) array and returns matching
    (2,) or (n, 2) pixel coordinates. Raises BehindCameraError if any
    point has camera-frame depth <= 1e-9.
    """
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    pts = np.atleast_2d(x)
    if pts.shape[-1] != 3:
        raise ValueError(f"world points must have 3 components, got shape {x.shape}")
    w = pts @ camera.pose.rotation().T + camera.pose.translation()
    z = w[:, 2]
    if np.any(z <= _MIN_DEPTH):
        raise BehindCameraError("point at or behind the camera plane")
    xn = w[:, :2] / z[:, None]
    xd = apply_distortion(xn, camera.distortion)
    k = camera.intrinsics
    uv = np.stack([k.fx * xd[:, 0] + k.cx, k.fy * xd[:, 1] + k.cy], axis=-1)
    return uv[0] if single else uv


# ---------------------------------------------------------------------------
# View-direction accuracy analysis
# ---------------------------------------------------------------------------


def parallelogram_diagonals(alpha: float, h: float = 1.0) -> tuple[float, float]:
    """Diagonals of the intersection cell of two single-pixel view rays.

    Two cameras whose viewing directions differ by ``alpha`` see a feature
    of height ``h`` (in pixels) as two crossing strips; their intersection
    is a parallelogram. Returns (dz, dx): the longer diagonal (the depth
    uncertainty) and the shorter one (the in-plane uncertainty).
    """
    if not 0.0 < alpha < np.pi:
        raise ValueError(f"angle must lie in (0, pi), got {alpha}")
    if h <= 0.0:
        raise ValueError(f"feature height must be positive, got {h}")
    beta = np.pi - alpha
    a = h / np.sin(beta)
    b = h / np.sin(alpha)
    cross = 2.0 * a * b * np.cos(alpha)
    d_plus = np.sqrt(a * a + b * b + cross)
    d_minus = np.sqrt(a * a + b * b - cross)
    dz = float(max(d_plus, d_minus))
    dx = float(min(d_plus, d_minus))
    return dz, dx


def pixel_pitch(fov_width: float, sensor_width_px: float) -> float:
    """Physical size of one pixel: field-of-view width divided by pixel count."""
    if fov_width <= 0 or sensor_width_px <= 0:
        raise ValueError("fov_width and sensor_width_px must be positive")
    return fov_width / sensor_width_px


# ---------------------------------------------------------------------------
# Camera parameter files
# ---------------------------------------------------------------------------

_CAMERA_KEYS = (
    "fx", "fy", "cx", "cy",
    "alpha", "beta", "gamma", "tx", "ty", "tz",
    "k1", "k2", "k3", "k4", "k5", "k6", "p1", "p2",
)


def camera_to_dict(camera: CameraParams) -> dict[str, float]:
    """Flatten a camera to the plain key-value mapping used on disk."""
    out = {k: getattr(camera.intrinsics, k) for k in ("fx", "fy", "cx", "cy")}
    out.update({k: getattr(camera.pose, k) for k in ("alpha", "beta", "gamma", "tx", "ty", "tz")})
    out.update({f.name: getattr(camera.distortion, f.name) for f in fields(Distortion)})
    return out


def camera_from_dict(values: dict[str, float]) -> CameraParams:
    unknown = set(values) - set(_CAMERA_KEYS)
    if unknown:
        raise ValueError(f"unknown camera keys: {sorted(unknown)}")
    missing = {"fx", "fy", "cx", "cy"} - set(values)
    if missing:
        raise ValueError(f"missing camera keys: {sorted(missing)}")
    intr = CameraIntrinsics(values["fx"], values["fy"], values["cx"], values["cy"])
    pose = CameraPose(*(float(values.get(k, 0.0)) for k in ("alpha", "beta", "gamma", "tx", "ty", "tz")))
    dist = Distortion(*(float(values.get(k, 0.0)) for k in ("k1", "k2", "k3", "k4", "k5", "k6", "p1", "p2")))
    return CameraParams(intrinsics=intr, pose=pose, distortion=dist)


def save_camera(camera: CameraParams, path) -> None:
    """Write a camera as a plain-text key-value file (one `key = value` per line)."""
    lines = [f"{k} = {v!r}" for k, v in camera_to_dict(camera).items()]
    Path(path).write_text("\n".join(lines) + "\n", encoding="ascii")


def load_camera(path) -> CameraParams:
    """Read a camera parameter file; '#' starts a comment."""
    values: dict[str, float] = {}
    for raw in Path(path).read_text(encoding="ascii").splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" in line:
            key, _, val = line.partition("=")
        else:
            key, _, val = line.partition(" ")
        key, val = key.strip(), val.strip()
        if not key or not val:
            raise ValueError(f"malformed camera file line: {raw!r}")
        values[key] = float(val)
    return camera_from_dict(values)
