""" Projective-geometry value types and the exact mappings between world,
    camera and image coordinates.

    Conventions: camera frame has x to the right, y down and z along the
    optical axis; pixels have their origin at the top-left corner. All types
    are immutable and every operation is a pure function.
"""

from __future__ import annotations

import enum
import logging
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.linalg import LinAlgWarning, lu_factor, lu_solve
from scipy.spatial.transform import Rotation

from .exceptions import (BehindCamera, DegeneratePoint, InvalidModel,
                         RayParallelToPlane)
from .settings import DEFAULTS, resolve
from .utils import as_floats, frozen_array, is_finite

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Point2(object):
    x: float
    y: float

    def __post_init__(self):
        object.__setattr__(self, 'x', float(self.x))
        object.__setattr__(self, 'y', float(self.y))
        if not is_finite(self.x, self.y):
            raise InvalidModel("Point2 components must be finite, got "
                               "({}, {})".format(self.x, self.y))

    @classmethod
    def from_list(cls, value):
        return cls(*as_floats(value, 2))

    def to_list(self):
        return [self.x, self.y]

    def as_array(self):
        return np.array([self.x, self.y])

    def homogeneous(self):
        return np.array([self.x, self.y, 1.0])


@dataclass(frozen=True)
class Point3(object):
    x: float
    y: float
    z: float

    def __post_init__(self):
        for name in "xyz":
            object.__setattr__(self, name, float(getattr(self, name)))
        if not is_finite(self.x, self.y, self.z):
            raise InvalidModel("Point3 components must be finite, got "
                               "({}, {}, {})".format(self.x, self.y, self.z))

    @classmethod
    def from_list(cls, value):
        return cls(*as_floats(value, 3))

    @classmethod
    def from_array(cls, value):
        return cls(*(float(item) for item in value))

    def to_list(self):
        return [self.x, self.y, self.z]

    def as_array(self):
        return np.array([self.x, self.y, self.z])

    def homogeneous(self):
        return np.array([self.x, self.y, self.z, 1.0])


class Family(str, enum.Enum):
    PROJECTIVE = "projective"
    AFFINE = "affine"
    TWO_DOF = "two_dof"


class TwoDofVariant(str, enum.Enum):
    """ Two readings of the 2-DOF alignment model: diagonal scaling
        (A = diag(sx, sy), b = 0, c = 0) or pure translation
        (A = identity, b free, c = 0).
    """

    SCALING = "scaling"
    TRANSLATION = "translation"


def _max_entry(m):
    return float(np.max(np.abs(m)))


@dataclass(frozen=True, eq=False)
class Homography(object):
    """ The 3x3 map M between simulated and real image planes, acting on
        homogeneous pixels `(x, y, 1)`, with blocks

            M = [[A (2x2), b (2x1)],
                 [c (1x2), 1      ]]

        `m[2][2]` is exactly 1. Affine maps have `c = 0`; the two-DOF family
        further restricts M according to `variant`. Use `from_matrix()` to
        normalize an arbitrary projective matrix.
    """

    m: np.ndarray
    family: Family = Family.PROJECTIVE
    variant: TwoDofVariant = TwoDofVariant.SCALING

    def __post_init__(self):
        try:
            m = frozen_array(self.m, (3, 3))
        except ValueError as e:
            raise InvalidModel(str(e))
        object.__setattr__(self, 'm', m)
        object.__setattr__(self, 'family', Family(self.family))
        object.__setattr__(self, 'variant', TwoDofVariant(self.variant))

        if not np.all(np.isfinite(m)):
            raise InvalidModel("Homography entries must be finite")
        if m[2, 2] != 1.0:
            raise InvalidModel("Homography must have m[2][2] = 1, got {}".
                               format(m[2, 2]))
        if self.family is not Family.PROJECTIVE and (m[2, 0] != 0 or
                                                     m[2, 1] != 0):
            raise InvalidModel("{} homography must have c = 0".
                               format(self.family.value))
        if self.family is Family.TWO_DOF:
            if self.variant is TwoDofVariant.SCALING:
                free = (m[0, 1], m[1, 0], m[0, 2], m[1, 2])
                if any(value != 0 for value in free):
                    raise InvalidModel("Scaling homography must have "
                                       "off-diagonal A = 0 and b = 0")
            elif (m[0, 0] != 1 or m[1, 1] != 1 or
                  m[0, 1] != 0 or m[1, 0] != 0):
                raise InvalidModel("Translation homography must have "
                                   "A = identity")
        scale = _max_entry(m)
        if abs(np.linalg.det(m)) <= DEFAULTS.homogeneous_eps * scale ** 3:
            raise InvalidModel("Homography is not invertible")

    @classmethod
    def from_matrix(cls, m, family=Family.PROJECTIVE,
                    variant=TwoDofVariant.SCALING):
        m = np.array(m, dtype=float)
        if m.shape != (3, 3):
            raise InvalidModel("Expected a 3x3 matrix, got shape {}".
                               format(m.shape))
        if abs(m[2, 2]) <= DEFAULTS.homogeneous_eps * _max_entry(m):
            raise InvalidModel("Cannot normalize a homography with "
                               "m[2][2] = 0")
        m = m / m[2, 2]
        m[2, 2] = 1.0
        return cls(m, family, variant)

    @classmethod
    def identity(cls, family=Family.PROJECTIVE,
                 variant=TwoDofVariant.SCALING):
        return cls(np.eye(3), family, variant)

    @property
    def a(self):
        return self.m[:2, :2]

    @property
    def b(self):
        return self.m[:2, 2]

    @property
    def c(self):
        return self.m[2, :2]

    def inverse(self):
        if self.family is Family.TWO_DOF:
            m = np.eye(3)
            if self.variant is TwoDofVariant.SCALING:
                m[0, 0], m[1, 1] = 1.0 / self.m[0, 0], 1.0 / self.m[1, 1]
            else:
                m[:2, 2] = -self.m[:2, 2]
            return Homography(m, self.family, self.variant)

        m = np.linalg.inv(self.m)
        m = m / m[2, 2]
        m[2, 2] = 1.0
        if self.family is Family.AFFINE:
            m[2, :2] = 0.0
        return Homography(m, self.family, self.variant)

    def to_dict(self):
        result = {'m': self.m.ravel().tolist(), 'family': self.family.value}
        if self.family is Family.TWO_DOF:
            result['variant'] = self.variant.value
        return result

    @classmethod
    def from_dict(cls, data):
        return cls(np.reshape(np.array(data['m'], dtype=float), (3, 3)),
                   Family(data.get('family', Family.PROJECTIVE)),
                   TwoDofVariant(data.get('variant', TwoDofVariant.SCALING)))

    def __eq__(self, other):
        return (isinstance(other, Homography) and
                self.family is other.family and
                self.variant is other.variant and
                np.array_equal(self.m, other.m))

    __hash__ = None


@dataclass(frozen=True)
class Intrinsics(object):
    fx: float
    fy: float
    cx: float
    cy: float

    def __post_init__(self):
        for name in ('fx', 'fy', 'cx', 'cy'):
            object.__setattr__(self, name, float(getattr(self, name)))
        if not is_finite(self.fx, self.fy, self.cx, self.cy):
            raise InvalidModel("Intrinsics must be finite")
        if self.fx <= 0 or self.fy <= 0:
            raise InvalidModel("Focal lengths must be positive, got "
                               "fx={}, fy={}".format(self.fx, self.fy))

    def matrix(self):
        return np.array([[self.fx, 0.0, self.cx],
                         [0.0, self.fy, self.cy],
                         [0.0, 0.0, 1.0]])

    def to_dict(self):
        return {'fx': self.fx, 'fy': self.fy, 'cx': self.cx, 'cy': self.cy}

    @classmethod
    def from_dict(cls, data):
        return cls(data['fx'], data['fy'], data['cx'], data['cy'])


@dataclass(frozen=True, eq=False)
class Extrinsics(object):
    """ World-to-camera pose: `p_c = r p + t`. """

    r: np.ndarray
    t: np.ndarray

    def __post_init__(self):
        try:
            r = frozen_array(self.r, (3, 3))
            t = frozen_array(np.ravel(self.t), (3,))
        except ValueError as e:
            raise InvalidModel(str(e))
        object.__setattr__(self, 'r', r)
        object.__setattr__(self, 't', t)

        if not (np.all(np.isfinite(r)) and np.all(np.isfinite(t))):
            raise InvalidModel("Extrinsics must be finite")
        tol = DEFAULTS.rotation_tol
        if np.max(np.abs(r.T @ r - np.eye(3))) > tol:
            raise InvalidModel("Rotation is not orthonormal")
        if abs(np.linalg.det(r) - 1.0) > tol:
            raise InvalidModel("Rotation must have determinant +1")

    @classmethod
    def identity(cls):
        return cls(np.eye(3), np.zeros(3))

    @classmethod
    def from_rotvec(cls, rotvec, t):
        return cls(Rotation.from_rotvec(rotvec).as_matrix(), t)

    @classmethod
    def look_at(cls, eye, target, up=(0.0, 0.0, 1.0)):
        """ Camera at `eye` looking at `target`; image "up" follows `up`
            unless the viewing direction is parallel to it, in which case the
            world y axis is used.
        """

        eye, target = np.asarray(eye, float), np.asarray(target, float)
        z = target - eye
        norm = np.linalg.norm(z)
        if norm == 0:
            raise InvalidModel("Camera eye and target coincide")
        z = z / norm
        x = np.cross(z, np.asarray(up, float))
        if np.linalg.norm(x) < 1e-9:
            x = np.cross(z, np.array([0.0, 1.0, 0.0]))
        x = x / np.linalg.norm(x)
        y = np.cross(z, x)
        r = np.vstack([x, y, z])
        return cls(r, -r @ eye)

    @property
    def center(self):
        return -self.r.T @ self.t

    def matrix(self):
        return np.hstack([self.r, self.t[:, None]])

    def transform(self, p):
        return self.r @ np.asarray(p, float) + self.t

    def to_dict(self):
        return {'r': self.r.ravel().tolist(), 't': self.t.tolist()}

    @classmethod
    def from_dict(cls, data):
        return cls(np.reshape(np.array(data['r'], dtype=float), (3, 3)),
                   np.array(data['t'], dtype=float))

    def __eq__(self, other):
        return (isinstance(other, Extrinsics) and
                np.array_equal(self.r, other.r) and
                np.array_equal(self.t, other.t))

    __hash__ = None


@dataclass(frozen=True)
class CameraModel(object):
    intrinsics: Intrinsics
    extrinsics: Extrinsics

    def __post_init__(self):
        if np.linalg.matrix_rank(self.matrix()) != 3:
            raise InvalidModel("Camera matrix must have rank 3")

    def matrix(self):
        """ C = I E, the 3x4 projection matrix. """

        return self.intrinsics.matrix() @ self.extrinsics.matrix()

    def to_dict(self):
        return {'intrinsics': self.intrinsics.to_dict(),
                'extrinsics': self.extrinsics.to_dict()}

    @classmethod
    def from_dict(cls, data):
        return cls(Intrinsics.from_dict(data['intrinsics']),
                   Extrinsics.from_dict(data['extrinsics']))


@dataclass(frozen=True)
class Plane(object):
    """ {p : normal . p = d} with a unit normal. """

    normal: tuple
    d: float = 0.0

    def __post_init__(self):
        try:
            normal = as_floats(self.normal, 3)
        except ValueError as e:
            raise InvalidModel(str(e))
        object.__setattr__(self, 'normal', normal)
        object.__setattr__(self, 'd', float(self.d))
        if not is_finite(self.d, *normal):
            raise InvalidModel("Plane must be finite")
        if abs(np.linalg.norm(normal) - 1.0) > DEFAULTS.normal_tol:
            raise InvalidModel("Plane normal must have unit length")

    @classmethod
    def from_normal(cls, normal, d=0.0):
        """ Scale an arbitrary normal (and the offset with it) to unit
            length.
        """

        normal = np.asarray(normal, dtype=float)
        norm = np.linalg.norm(normal)
        if not norm > 0:
            raise InvalidModel("Plane normal cannot be zero")
        return cls(tuple(normal / norm), d / norm)

    @classmethod
    def through(cls, point, normal):
        plane = cls.from_normal(normal)
        return cls(plane.normal, float(np.dot(plane.normal, point)))

    def signed_distance(self, p):
        return float(np.dot(self.normal, _as_array(p))) - self.d

    def project_point(self, p):
        p = _as_array(p)
        return p - self.signed_distance(p) * np.asarray(self.normal)

    def basis(self):
        """ Orthonormal in-plane axes (e1, e2) with e1 x e2 = normal. e1 is the
            world x axis projected onto the plane (world y if x is normal to
            it).
        """

        n = np.asarray(self.normal)
        for axis in (np.array([1.0, 0.0, 0.0]), np.array([0.0, 1.0, 0.0])):
            e1 = axis - np.dot(axis, n) * n
            if np.linalg.norm(e1) > 1e-6:
                e1 = e1 / np.linalg.norm(e1)
                return e1, np.cross(n, e1)

    def to_dict(self):
        return {'normal': list(self.normal), 'd': self.d}

    @classmethod
    def from_dict(cls, data):
        return cls(tuple(data['normal']), data.get('d', 0.0))


def _as_array(p):
    if isinstance(p, (Point2, Point3)):
        return p.as_array()
    return np.asarray(p, dtype=float)


def camera_frame(ext, p):
    """ (X_c, Y_c, Z_c) of a world point. """

    return ext.transform(_as_array(p))


def apply_homography(h, v, settings=None):
    """ `M (x, y, 1)` followed by the homogeneous division.

            >>> apply_homography(h, Point2(100, 50))
            <<< Point2(x=50.0, y=25.0)  # with c = (0.01, 0)
    """

    settings = resolve(settings)
    u = h.m @ v.homogeneous()
    w = u[2]
    if abs(w) <= settings.homogeneous_eps * _max_entry(h.m):
        logger.debug("Homogeneous weight %.3g at (%s, %s)", w, v.x, v.y)
        raise DegeneratePoint("Point ({}, {}) maps to infinity".
                              format(v.x, v.y))
    return Point2(u[0] / w, u[1] / w)


def project(cam, p, settings=None):
    settings = resolve(settings)
    xc, yc, zc = camera_frame(cam.extrinsics, p)
    if zc <= settings.homogeneous_eps:
        logger.debug("Camera depth %.3g for %s", zc, _as_array(p).tolist())
        raise BehindCamera("Point {} is not in front of the camera".
                           format(_as_array(p).tolist()))
    k = cam.intrinsics
    return Point2(k.fx * xc / zc + k.cx, k.fy * yc / zc + k.cy)


def backproject_to_plane(cam, v, plane, settings=None):
    """ The point of `plane` whose image is `v`, from the linear system

            C1 (p, 1) - x C3 (p, 1) = 0
            C2 (p, 1) - y C3 (p, 1) = 0
            normal . p = d
    """

    settings = resolve(settings)
    c = cam.matrix()
    rows = np.vstack([c[0] - v.x * c[2],
                      c[1] - v.y * c[2],
                      np.append(plane.normal, -plane.d)])
    a, rhs = rows[:, :3], -rows[:, 3]

    with warnings.catch_warnings():
        warnings.simplefilter('ignore', LinAlgWarning)
        lu, piv = lu_factor(a)
    pivots = np.abs(np.diag(lu))
    if not pivots.max() > 0 or (pivots.min() <
                                settings.pivot_ratio * pivots.max()):
        logger.debug("Backprojection pivots %s at (%s, %s)", pivots.tolist(),
                     v.x, v.y)
        raise RayParallelToPlane("Viewing ray through ({}, {}) is parallel "
                                 "to the plane".format(v.x, v.y))
    p = lu_solve((lu, piv), rhs)

    zc = camera_frame(cam.extrinsics, p)[2]
    if zc <= settings.homogeneous_eps:
        logger.debug("Plane hit at camera depth %.3g", zc)
        raise BehindCamera("Plane is hit behind the camera at pixel ({}, {})".
                           format(v.x, v.y))
    return Point3.from_array(p)
