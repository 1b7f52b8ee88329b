""" The three regressions that align simulation with reality:

    1. camera alignment, a homography between simulated and real pixels
       (`fit_homography`),
    2. calibration of the simulated camera's intrinsics from pixel/world
       pairs under a known pose (`fit_intrinsics`),
    3. a 3D affine correction of planned robot positions (`fit_correction`).

    Every fit returns a `FitReport` carrying the model and its residual
    statistics. Fits are pure functions of their inputs.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import least_squares

from .exceptions import (BehindCamera, ConstraintViolation,
                         DegenerateConfiguration, DegeneratePoint,
                         InsufficientPoints, InvalidModel)
from .geometry import (Family, Homography, Intrinsics, Point2, Point3,
                       TwoDofVariant, apply_homography, camera_frame)
from .settings import DEFAULTS, resolve
from .utils import frozen_array, has_fields, is_dict, summarize

logger = logging.getLogger(__name__)

MIN_POINTS = {Family.PROJECTIVE: 4, Family.AFFINE: 3, Family.TWO_DOF: 1}
DOF = {Family.PROJECTIVE: 8, Family.AFFINE: 6, Family.TWO_DOF: 2}


# Correspondences
@dataclass(frozen=True)
class Correspondence2D2D(object):
    sim: Point2
    real: Point2

    def to_dict(self):
        return {'sim': self.sim.to_list(), 'real': self.real.to_list()}

    @classmethod
    def from_dict(cls, data):
        return cls(Point2.from_list(data['sim']),
                   Point2.from_list(data['real']))


@dataclass(frozen=True)
class Correspondence2D3D(object):
    pixel: Point2
    world: Point3

    def to_dict(self):
        return {'pixel': self.pixel.to_list(), 'world': self.world.to_list()}

    @classmethod
    def from_dict(cls, data):
        return cls(Point2.from_list(data['pixel']),
                   Point3.from_list(data['world']))


@dataclass(frozen=True)
class Correspondence3D3D(object):
    """ A position planned in simulation and where it should have been. """

    planned: Point3
    corrected: Point3

    def to_dict(self):
        return {'planned': self.planned.to_list(),
                'corrected': self.corrected.to_list()}

    @classmethod
    def from_dict(cls, data):
        return cls(Point3.from_list(data['planned']),
                   Point3.from_list(data['corrected']))


@dataclass(frozen=True, eq=False)
class Correction3D(object):
    """ `(corrected, 1) = D (planned, 1)` with D a 4x4 affine matrix. """

    d: np.ndarray

    def __post_init__(self):
        try:
            d = frozen_array(self.d, (4, 4))
        except ValueError as e:
            raise InvalidModel(str(e))
        object.__setattr__(self, 'd', d)
        if not np.all(np.isfinite(d)):
            raise InvalidModel("Correction entries must be finite")
        if tuple(d[3]) != (0.0, 0.0, 0.0, 1.0):
            raise InvalidModel("Correction must have bottom row (0, 0, 0, 1)")
        block = d[:3, :3]
        scale = float(np.max(np.abs(block)))
        if abs(np.linalg.det(block)) <= (DEFAULTS.homogeneous_eps *
                                         scale ** 3):
            raise InvalidModel("Correction must have an invertible linear "
                               "part")

    @classmethod
    def identity(cls):
        return cls(np.eye(4))

    @classmethod
    def translation(cls, t):
        d = np.eye(4)
        d[:3, 3] = t
        return cls(d)

    def to_dict(self):
        return {'d': self.d.ravel().tolist()}

    @classmethod
    def from_dict(cls, data):
        return cls(np.reshape(np.array(data['d'], dtype=float), (4, 4)))

    def __eq__(self, other):
        return isinstance(other, Correction3D) and np.array_equal(self.d,
                                                                  other.d)

    __hash__ = None


# Reports
@dataclass(frozen=True)
class FitReport(object):
    """ `residual_mean`/`residual_std` are over per-point Euclidean errors
        (pixels or world length units); `mse` is the mean of their squares.
    """

    model: object
    residual_mean: float
    residual_std: float
    mse: float
    n_points: int
    condition_estimate: float
    rank: int
    n_params: int
    residuals: tuple = field(default=(), repr=False)

    @property
    def kind(self):
        return _KINDS[type(self.model)]

    def to_dict(self):
        return {'kind': self.kind,
                'model': self.model.to_dict(),
                'residual_mean': self.residual_mean,
                'residual_std': self.residual_std,
                'mse': self.mse,
                'n_points': self.n_points,
                'diagnostics': {'condition_estimate': self.condition_estimate,
                                'rank': self.rank,
                                'n_params': self.n_params},
                'residuals': list(self.residuals)}

    @classmethod
    def from_dict(cls, data):
        diagnostics = data.get('diagnostics', {})
        return cls(model=model_from_dict(data['model'], data['kind']),
                   residual_mean=data['residual_mean'],
                   residual_std=data['residual_std'],
                   mse=data['mse'],
                   n_points=data['n_points'],
                   condition_estimate=diagnostics.get('condition_estimate',
                                                      float('nan')),
                   rank=diagnostics.get('rank', 0),
                   n_params=diagnostics.get('n_params', 0),
                   residuals=tuple(data.get('residuals', ())))


@dataclass(frozen=True)
class AlignmentStats(object):
    mean: float
    std: float
    mse: float
    n_points: int
    errors: tuple = field(default=(), repr=False)

    def to_dict(self):
        return {'mean': self.mean, 'std': self.std, 'mse': self.mse,
                'n_points': self.n_points, 'errors': list(self.errors)}


_KINDS = {Homography: 'homography', Intrinsics: 'intrinsics',
          Correction3D: 'correction'}


def model_from_dict(data, kind=None):
    """ Build a fitted model from its JSON record, or from a whole FitReport
        record (its 'model' field is used).
    """

    if is_dict(data) and has_fields(data, 'kind', 'model'):
        return model_from_dict(data['model'], data['kind'])
    if kind is None:
        if 'm' in data:
            kind = 'homography'
        elif 'fx' in data:
            kind = 'intrinsics'
        elif 'd' in data:
            kind = 'correction'
    classes = {name: klass for klass, name in _KINDS.items()}
    if kind not in classes:
        raise ValueError("Unknown model kind '{}'".format(kind))
    return classes[kind].from_dict(data)


def _report(model, errors, condition, rank, n_params):
    mean, std, mse = summarize(errors)
    return FitReport(model=model, residual_mean=mean, residual_std=std,
                     mse=mse, n_points=len(errors),
                     condition_estimate=condition, rank=rank,
                     n_params=n_params,
                     residuals=tuple(float(e) for e in errors))


def _check_rank(design, settings, what):
    """ Rank from the singular values; raises when the design cannot
        identify every parameter. Returns (rank, condition estimate).
    """

    s = np.linalg.svd(design, compute_uv=False)
    if s.size == 0 or not s[0] > 0:
        rank = 0
    else:
        rank = int(np.sum(s > settings.rank_ratio * s[0]))
    if rank < design.shape[1]:
        raise DegenerateConfiguration(
            "{} design matrix has rank {} < {}".format(what, rank,
                                                       design.shape[1]),
            rank)
    return rank, float(s[0] / s[-1])


def _require(n, needed, what):
    if n < needed:
        raise InsufficientPoints("{} fit needs at least {} correspondences, "
                                 "got {}".format(what, needed, n), needed, n)


# Camera alignment
def _normalizing_transform(points):
    """ Similarity moving the centroid to the origin with mean distance
        sqrt(2).
    """

    centroid = points.mean(axis=0)
    distance = np.mean(np.linalg.norm(points - centroid, axis=1))
    if not distance > 0:
        raise DegenerateConfiguration("All points coincide", 0)
    s = np.sqrt(2) / distance
    return np.array([[s, 0, -s * centroid[0]],
                     [0, s, -s * centroid[1]],
                     [0, 0, 1]])


def _transform(t, points):
    h = np.hstack([points, np.ones((len(points), 1))]) @ t.T
    return h[:, :2] / h[:, 2:]


def homography_design(pairs, family=Family.PROJECTIVE,
                      variant=TwoDofVariant.SCALING):
    """ The linear least-squares problem `design @ params ~ target` behind
        `fit_homography`, plus the point normalizations (`t_sim`, `t_real`)
        it was built in. Only the projective family is normalized; the other
        families work on raw pixels.

        Parameters, row-major over the free entries of M:

        - projective: m00 m01 m02 m10 m11 m12 m20 m21 (w (u, v, 1) =
          M (x, y, 1) with m22 = 1, linearized)
        - affine:     m00 m01 m02 m10 m11 m12
        - two-DOF:    sx sy (scaling) or bx by (translation)
    """

    family, variant = Family(family), TwoDofVariant(variant)
    sim = np.array([p.sim.to_list() for p in pairs], dtype=float)
    real = np.array([p.real.to_list() for p in pairs], dtype=float)
    t_sim = t_real = np.eye(3)
    if family is Family.PROJECTIVE:
        t_sim = _normalizing_transform(sim)
        t_real = _normalizing_transform(real)
        sim, real = _transform(t_sim, sim), _transform(t_real, real)

    n = len(pairs)
    x, y = sim[:, 0], sim[:, 1]
    u, v = real[:, 0], real[:, 1]
    zeros, ones = np.zeros(n), np.ones(n)

    if family is Family.PROJECTIVE:
        rows_u = np.column_stack([x, y, ones, zeros, zeros, zeros,
                                  -x * u, -y * u])
        rows_v = np.column_stack([zeros, zeros, zeros, x, y, ones,
                                  -x * v, -y * v])
        target = (u, v)
    elif family is Family.AFFINE:
        rows_u = np.column_stack([x, y, ones, zeros, zeros, zeros])
        rows_v = np.column_stack([zeros, zeros, zeros, x, y, ones])
        target = (u, v)
    elif variant is TwoDofVariant.SCALING:
        rows_u = np.column_stack([x, zeros])
        rows_v = np.column_stack([zeros, y])
        target = (u, v)
    else:
        rows_u = np.column_stack([ones, zeros])
        rows_v = np.column_stack([zeros, ones])
        target = (u - x, v - y)

    # Interleave so that rows 2i and 2i+1 belong to pair i
    design = np.empty((2 * n, rows_u.shape[1]))
    design[0::2], design[1::2] = rows_u, rows_v
    rhs = np.empty(2 * n)
    rhs[0::2], rhs[1::2] = target
    return design, rhs, t_sim, t_real


def _assemble(params, family, variant):
    m = np.eye(3)
    if family is Family.PROJECTIVE:
        m.flat[:8] = params
    elif family is Family.AFFINE:
        m[:2, :] = np.reshape(params, (2, 3))
    elif variant is TwoDofVariant.SCALING:
        m[0, 0], m[1, 1] = params
    else:
        m[:2, 2] = params
    return m


def _transfer_errors(h, pairs, settings):
    errors = []
    for i, pair in enumerate(pairs):
        try:
            predicted = apply_homography(h, pair.sim, settings)
        except DegeneratePoint as e:
            raise e.at(i)
        errors.append(np.hypot(predicted.x - pair.real.x,
                               predicted.y - pair.real.y))
    return errors


def _refine(h, pairs, settings):
    """ Polish a projective fit on reprojection error, starting from the
        linear solution and from the best affine map. Never returns a worse
        map than either start.
    """

    sim = np.array([p.sim.to_list() for p in pairs])
    real = np.array([p.real.to_list() for p in pairs])
    scale = max(1.0, float(np.max(np.abs(real))))

    def residuals(params):
        m = np.append(params, 1.0).reshape(3, 3)
        w = sim @ m[2, :2] + m[2, 2]
        w = np.where(np.abs(w) < 1e-12, 1e-12, w)
        predicted = (sim @ m[:2, :2].T + m[:2, 2]) / w[:, None]
        return ((predicted - real) / scale).ravel()

    starts = [h.m]
    try:
        starts.append(fit_homography(pairs, Family.AFFINE,
                                     settings=settings).model.m)
    except (DegenerateConfiguration, InvalidModel):
        pass

    best = None
    for start in starts:
        result = least_squares(residuals, start.ravel()[:8], method='lm')
        logger.debug("Refinement from %s start: cost %.6g -> %.6g",
                     'affine' if start is not h.m else 'linear',
                     0.5 * np.sum(residuals(start.ravel()[:8]) ** 2),
                     result.cost)
        if best is None or result.cost < best.cost:
            best = result
    try:
        return Homography(np.append(best.x, 1.0).reshape(3, 3))
    except InvalidModel:
        return h


def fit_homography(pairs, family=Family.PROJECTIVE,
                   variant=TwoDofVariant.SCALING, refine=False,
                   settings=None):
    """ Least-squares M of the requested family mapping simulated pixels to
        real ones. Usage:

            >>> report = fit_homography(pairs, Family.AFFINE)
            >>> report.model.m
            >>> report.residual_mean, report.residual_std

        `variant` picks the two-DOF reading (diagonal scaling by default,
        or translation). `refine=True` adds a reprojection-error polish to
        the projective fit.
    """

    settings = resolve(settings)
    family, variant = Family(family), TwoDofVariant(variant)
    pairs = list(pairs)
    _require(len(pairs), MIN_POINTS[family], family.value)

    design, rhs, t_sim, t_real = homography_design(pairs, family, variant)
    rank, condition = _check_rank(design, settings, family.value)
    params = np.linalg.lstsq(design, rhs, rcond=None)[0]

    m = _assemble(params, family, variant)
    if family is Family.PROJECTIVE:
        m = np.linalg.inv(t_real) @ m @ t_sim
    try:
        if family is Family.PROJECTIVE:
            h = Homography.from_matrix(m)
        else:
            h = Homography(m, family, variant)
    except InvalidModel as e:
        raise DegenerateConfiguration("Fitted {} map is singular: {}".
                                      format(family.value, e), rank)

    if refine and family is Family.PROJECTIVE:
        h = _refine(h, pairs, settings)

    errors = _transfer_errors(h, pairs, settings)
    report = _report(h, errors, condition, rank, DOF[family])
    logger.debug("%s fit on %d points: mean %.4g px, cond %.3g",
                 family.value, len(pairs), report.residual_mean, condition)
    return report


def evaluate_alignment(h, holdout, settings=None):
    """ Per-point Euclidean pixel error of `h` on held-out pairs. """

    settings = resolve(settings)
    holdout = list(holdout)
    _require(len(holdout), 1, "alignment evaluation")
    errors = _transfer_errors(h, holdout, settings)
    mean, std, mse = summarize(errors)
    return AlignmentStats(mean=mean, std=std, mse=mse, n_points=len(errors),
                          errors=tuple(float(e) for e in errors))


# Intrinsic calibration
def _regressor(values, settings, axis):
    if np.var(values) < settings.variance_eps:
        raise DegenerateConfiguration(
            "Normalized {0}_c/z_c coordinates do not vary; f{0} and c{0} are "
            "not separable".format(axis), 1)


def fit_intrinsics(pairs, ext, equal_focal=False, settings=None):
    """ Intrinsics of a camera with known pose from pixel/world pairs.

        Pixels follow x = fx X_c/Z_c + cx and y = fy Y_c/Z_c + cy, so the fit
        is two independent line regressions. With `equal_focal=True` a single
        focal length is shared between both axes.
    """

    settings = resolve(settings)
    pairs = list(pairs)
    _require(len(pairs), 2, "intrinsics")

    normalized, pixels = [], []
    for i, pair in enumerate(pairs):
        xc, yc, zc = camera_frame(ext, pair.world)
        if zc <= settings.homogeneous_eps:
            raise BehindCamera("World point {} is behind the camera".
                               format(pair.world.to_list()), i)
        normalized.append((xc / zc, yc / zc))
        pixels.append(pair.pixel.to_list())
    normalized, pixels = np.array(normalized), np.array(pixels)
    a, b = normalized[:, 0], normalized[:, 1]
    _regressor(a, settings, 'x')
    _regressor(b, settings, 'y')

    n = len(pairs)
    if equal_focal:
        design = np.zeros((2 * n, 3))
        design[0::2, 0], design[0::2, 1] = a, 1.0
        design[1::2, 0], design[1::2, 2] = b, 1.0
        rhs = pixels.ravel()
        rank, condition = _check_rank(design, settings, "intrinsics")
        f, cx, cy = np.linalg.lstsq(design, rhs, rcond=None)[0]
        fx = fy = f
        n_params = 3
    else:
        design_x = np.column_stack([a, np.ones(n)])
        design_y = np.column_stack([b, np.ones(n)])
        rank_x, cond_x = _check_rank(design_x, settings, "intrinsics (x)")
        rank_y, cond_y = _check_rank(design_y, settings, "intrinsics (y)")
        fx, cx = np.linalg.lstsq(design_x, pixels[:, 0], rcond=None)[0]
        fy, cy = np.linalg.lstsq(design_y, pixels[:, 1], rcond=None)[0]
        rank, condition = rank_x + rank_y, max(cond_x, cond_y)
        n_params = 4

    if not (fx > 0 and fy > 0):
        raise ConstraintViolation("Least-squares focal lengths are not "
                                  "positive (fx={}, fy={}); correspondences "
                                  "are likely corrupt".format(fx, fy))
    intrinsics = Intrinsics(fx, fy, cx, cy)

    predicted = np.column_stack([fx * a + cx, fy * b + cy])
    errors = np.linalg.norm(predicted - pixels, axis=1)
    return _report(intrinsics, errors, condition, rank, n_params)


# Control correction
def fit_correction(pairs, settings=None):
    """ Least-squares 3D affine map (12 parameters) from planned to
        corrected positions.
    """

    settings = resolve(settings)
    pairs = list(pairs)
    _require(len(pairs), 4, "correction")

    planned = np.array([p.planned.to_list() for p in pairs])
    corrected = np.array([p.corrected.to_list() for p in pairs])
    design = np.hstack([planned, np.ones((len(pairs), 1))])
    try:
        rank, condition = _check_rank(design, settings, "correction")
    except DegenerateConfiguration as e:
        raise DegenerateConfiguration("Planned points are coplanar; {}".
                                      format(e.detail), e.rank)

    solution = np.linalg.lstsq(design, corrected, rcond=None)[0]
    d = np.eye(4)
    d[:3, :] = solution.T
    try:
        correction = Correction3D(d)
    except InvalidModel as e:
        raise DegenerateConfiguration("Fitted correction is singular: {}".
                                      format(e), rank)

    predicted = design @ solution
    errors = np.linalg.norm(predicted - corrected, axis=1)
    return _report(correction, errors, condition, rank, 12)


def apply_correction(c, p):
    return Point3.from_array(c.d[:3, :3] @ p.as_array() + c.d[:3, 3])
