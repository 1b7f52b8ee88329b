""" Digital-twin construction: object contours in the camera image become
    objects placed on the support plane of the simulated scene.

    The pipeline per object is contour -> key points -> backprojection onto
    the support plane -> pose and dimensions. Segmentation is not done here;
    contours arrive as data.

    Key point conventions:

    - Cuboid: the 4 corners of the base face, ordered clockwise on screen
      starting from the top-left corner (smallest x + y), named
      `top_left`, `top_right`, `bottom_right`, `bottom_left`.
    - Cylinder: `center` of the base ellipse, then `major_a`/`major_b` (ends
      of the major axis, `major_a` having the smaller x) and
      `minor_a`/`minor_b` (ends of the minor axis, `minor_a` having the
      smaller y).

    Contours may be full silhouettes. A six-cornered cuboid silhouette shows
    three base corners; the fourth is marked `inferred` and rebuilt on the
    plane. A cylinder silhouette is reduced to its lower rim arc before the
    ellipse fit.
"""

from __future__ import annotations

import enum
import logging
import math
from collections import namedtuple
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import ConvexHull, QhullError

from .exceptions import (ContourTooCoarse, DuplicateLabel, FitFailure,
                         InconsistentFootprint, InvalidModel,
                         SceneBuildFailure, Sim2RealException)
from .geometry import (CameraModel, Plane, Point2, Point3,
                       backproject_to_plane, project)
from .settings import DEFAULTS, resolve

logger = logging.getLogger(__name__)

CUBOID_KEYPOINTS = ('top_left', 'top_right', 'bottom_right', 'bottom_left')
CYLINDER_KEYPOINTS = ('center', 'major_a', 'major_b', 'minor_a', 'minor_b')
DIMENSIONS = {'cuboid': ('width', 'depth', 'height'),
              'cylinder': ('radius', 'height')}

# A lower hull edge at least this many times the median edge is a straight
# silhouette side, not part of the base rim
SIDE_EDGE_RATIO = 3.0


class ShapeClass(str, enum.Enum):
    CUBOID = "cuboid"
    CYLINDER = "cylinder"

    @property
    def keypoint_names(self):
        if self is ShapeClass.CUBOID:
            return CUBOID_KEYPOINTS
        return CYLINDER_KEYPOINTS

    @property
    def dimension_names(self):
        return DIMENSIONS[self.value]


@dataclass(frozen=True)
class Contour2D(object):
    """ Closed polyline in image coordinates; the closing edge is implicit. """

    points: tuple
    label: str = ""

    def __post_init__(self):
        points = tuple(p if isinstance(p, Point2) else Point2.from_list(p)
                       for p in self.points)
        if len(points) > 3 and points[0] == points[-1]:
            points = points[:-1]
        if len(points) < 3:
            raise InvalidModel("Contour '{}' needs at least 3 points".
                               format(self.label))
        object.__setattr__(self, 'points', points)

    def as_array(self):
        return np.array([p.to_list() for p in self.points])

    def to_dict(self):
        return {'label': self.label,
                'points': [p.to_list() for p in self.points]}

    @classmethod
    def from_dict(cls, data):
        return cls(tuple(data['points']), data['label'])


def parse_contours(data):
    """ `[{label, shape, points}, ...]` -> [(Contour2D, ShapeClass), ...] """

    return [(Contour2D.from_dict(item), ShapeClass(item['shape']))
            for item in data]


@dataclass(frozen=True)
class KeyPointSet(object):
    """ `inferred` names a cuboid corner hidden behind the object. Its image
        position is only an estimate; placement rebuilds it on the plane
        from the other three corners.
    """

    shape: ShapeClass
    image_points: tuple
    label: str = ""
    inferred: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, 'shape', ShapeClass(self.shape))
        points = tuple(p if isinstance(p, Point2) else Point2.from_list(p)
                       for p in self.image_points)
        if len(points) != len(self.shape.keypoint_names):
            raise InvalidModel("{} key point set needs {} points, got {}".
                               format(self.shape.value,
                                      len(self.shape.keypoint_names),
                                      len(points)))
        object.__setattr__(self, 'image_points', points)
        inferred = tuple(self.inferred)
        if inferred and (self.shape is not ShapeClass.CUBOID or
                         len(inferred) > 1 or
                         inferred[0] not in self.shape.keypoint_names):
            raise InvalidModel("Only one cuboid corner can be inferred, got "
                               "{}".format(list(inferred)))
        object.__setattr__(self, 'inferred', inferred)

    @property
    def names(self):
        return self.shape.keypoint_names

    def __getitem__(self, name):
        return self.image_points[self.names.index(name)]

    def to_dict(self):
        result = {'shape': self.shape.value, 'label': self.label,
                  'points': {name: point.to_list()
                             for name, point in zip(self.names,
                                                    self.image_points)}}
        if self.inferred:
            result['inferred'] = list(self.inferred)
        return result

    @classmethod
    def from_dict(cls, data):
        shape = ShapeClass(data['shape'])
        return cls(shape, tuple(data['points'][name]
                                for name in shape.keypoint_names),
                   data.get('label', ""), tuple(data.get('inferred', ())))


@dataclass(frozen=True)
class PlacedObject(object):
    """ An object resting on `plane`, rotated by `yaw` radians about the plane
        normal. Yaw is measured from the plane's first basis axis (see
        `Plane.basis()`); for cuboids it is the direction of the `width`
        edge, wrapped to [-pi/2, pi/2).
    """

    label: str
    shape: ShapeClass
    position: Point3
    yaw: float
    dimensions: dict
    plane: Plane = field(repr=False)

    def __post_init__(self):
        object.__setattr__(self, 'shape', ShapeClass(self.shape))
        object.__setattr__(self, 'yaw', float(self.yaw))
        dimensions = {name: float(self.dimensions[name])
                      for name in self.shape.dimension_names
                      if name in self.dimensions}
        if set(dimensions) != set(self.shape.dimension_names):
            raise InvalidModel("{} '{}' needs dimensions {}".
                               format(self.shape.value, self.label,
                                      list(self.shape.dimension_names)))
        if not all(value > 0 and math.isfinite(value)
                   for value in dimensions.values()):
            raise InvalidModel("Dimensions of '{}' must be positive".
                               format(self.label))
        object.__setattr__(self, 'dimensions', dimensions)
        distance = self.plane.signed_distance(self.position)
        if abs(distance) > DEFAULTS.on_plane_tol:
            raise InvalidModel("'{}' is {} away from its support plane".
                               format(self.label, distance))

    def axes(self):
        """ In-plane unit vectors along the yaw direction and across it. """

        e1, e2 = self.plane.basis()
        along = math.cos(self.yaw) * e1 + math.sin(self.yaw) * e2
        return along, np.cross(self.plane.normal, along)

    def base_corners(self):
        """ World corners of a cuboid's base, counterclockwise about the
            plane normal.
        """

        if self.shape is not ShapeClass.CUBOID:
            raise InvalidModel("Only cuboids have base corners")
        along, across = self.axes()
        w = self.dimensions['width'] / 2.0
        d = self.dimensions['depth'] / 2.0
        center = self.position.as_array()
        return [Point3.from_array(center + sx * w * along + sy * d * across)
                for sx, sy in ((-1, -1), (1, -1), (1, 1), (-1, 1))]

    def rim_points(self, count=64):
        """ World points on a cylinder's base circle. """

        if self.shape is not ShapeClass.CYLINDER:
            raise InvalidModel("Only cylinders have a rim")
        along, across = self.axes()
        r = self.dimensions['radius']
        center = self.position.as_array()
        angles = np.linspace(0.0, 2 * np.pi, count, endpoint=False)
        return [Point3.from_array(center + r * (math.cos(a) * along +
                                                math.sin(a) * across))
                for a in angles]

    def to_dict(self):
        return {'label': self.label,
                'shape': self.shape.value,
                'position': self.position.to_list(),
                'yaw': self.yaw,
                'dimensions': dict(self.dimensions)}

    @classmethod
    def from_dict(cls, data, plane):
        return cls(data['label'], ShapeClass(data['shape']),
                   Point3.from_list(data['position']), data['yaw'],
                   data['dimensions'], plane)


@dataclass(frozen=True)
class TwinScene(object):
    support_plane: Plane
    objects: tuple
    sim_camera: CameraModel
    failures: dict = field(default_factory=dict)

    def __post_init__(self):
        labels = [obj.label for obj in self.objects]
        duplicates = sorted({label for label in labels
                             if labels.count(label) > 1})
        if duplicates:
            raise DuplicateLabel("Duplicate object labels: {}".
                                 format(duplicates), duplicates[0])
        object.__setattr__(self, 'objects',
                           tuple(sorted(self.objects,
                                        key=lambda obj: obj.label)))

    @property
    def labels(self):
        return [obj.label for obj in self.objects]

    def get(self, label):
        for obj in self.objects:
            if obj.label == label:
                return obj
        raise KeyError(label)

    def to_dict(self):
        return {'support_plane': self.support_plane.to_dict(),
                'sim_camera': self.sim_camera.to_dict(),
                'objects': [obj.to_dict() for obj in self.objects],
                'failures': dict(self.failures)}

    @classmethod
    def from_dict(cls, data):
        plane = Plane.from_dict(data['support_plane'])
        return cls(plane,
                   tuple(PlacedObject.from_dict(item, plane)
                         for item in data.get('objects', [])),
                   CameraModel.from_dict(data['sim_camera']),
                   dict(data.get('failures', {})))


# Contour processing
def _perimeter(points):
    return float(np.sum(np.linalg.norm(np.roll(points, -1, axis=0) - points,
                                       axis=1)))


def _segment_distances(points, start, end):
    line = end - start
    length = np.linalg.norm(line)
    if length == 0:
        return np.linalg.norm(points - start, axis=1)
    offsets = points - start
    return np.abs(line[0] * offsets[:, 1] - line[1] * offsets[:, 0]) / length


def _douglas_peucker(points, tolerance):
    """ Indices kept from an open polyline, first and last included. """

    keep = np.zeros(len(points), dtype=bool)
    keep[0] = keep[-1] = True
    stack = [(0, len(points) - 1)]
    while stack:
        s, e = stack.pop()
        if e <= s + 1:
            continue
        distances = _segment_distances(points[s + 1:e], points[s], points[e])
        i = int(np.argmax(distances))
        if distances[i] > tolerance:
            keep[s + 1 + i] = True
            stack.append((s, s + 1 + i))
            stack.append((s + 1 + i, e))
    return np.flatnonzero(keep)


def simplify_contour(points, tolerance):
    """ Douglas-Peucker on a closed contour. The contour is split at a vertex
        chosen independently of where the contour starts (smallest x + y)
        and at the vertex farthest from it. Returns the kept indices in
        contour order.
    """

    points = np.asarray(points, dtype=float)
    n = len(points)
    anchor = min(range(n), key=lambda i: (points[i].sum(), points[i][0]))
    order = np.roll(np.arange(n), -anchor)
    ring = points[order]
    far = int(np.argmax(np.linalg.norm(ring - ring[0], axis=1)))
    if far == 0:
        return np.array([anchor])

    first = _douglas_peucker(ring[:far + 1], tolerance)
    second = _douglas_peucker(np.vstack([ring[far:], ring[:1]]), tolerance)
    kept = np.concatenate([first, far + second[1:-1]])
    return np.sort(order[kept])


def _turning_angles(polygon):
    before = polygon - np.roll(polygon, 1, axis=0)
    after = np.roll(polygon, -1, axis=0) - polygon
    cross = before[:, 0] * after[:, 1] - before[:, 1] * after[:, 0]
    dot = np.sum(before * after, axis=1)
    return np.abs(np.arctan2(cross, dot))


def _polygon_area(polygon):
    x, y = polygon[:, 0], polygon[:, 1]
    return 0.5 * abs(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))


def order_corners(corners):
    """ Clockwise on screen (image y points down), starting at the corner
        with the smallest x + y.
    """

    corners = np.asarray(corners, dtype=float)
    return corners[_corner_order(corners)]


def _corner_order(corners):
    center = corners.mean(axis=0)
    angles = np.arctan2(corners[:, 1] - center[1], corners[:, 0] - center[0])
    order = np.argsort(angles, kind='stable')
    ring = corners[order]
    start = min(range(len(ring)), key=lambda i: (ring[i].sum(), ring[i][0]))
    return np.roll(order, -start)


def _cuboid_base(polygon):
    """ Base corners of a simplified cuboid silhouette, plus the index of the
        corner hidden behind the object (None when all four are seen).
    """

    if len(polygon) == 6:
        # Silhouette with a visible top: the base is the lowest chain of
        # three corners. The rear corner is a rough image estimate only.
        heights = polygon[:, 1] + np.roll(polygon, 1, axis=0)[:, 1] + \
            np.roll(polygon, -1, axis=0)[:, 1]
        i = int(np.argmax(heights))
        left, front, right = polygon[i - 1], polygon[i], \
            polygon[(i + 1) % len(polygon)]
        return np.array([left, front, right, left + right - front]), 3
    if len(polygon) > 4:
        sharpest = np.sort(np.argsort(-_turning_angles(polygon),
                                      kind='stable')[:4])
        return polygon[sharpest], None
    return polygon, None


def _lower_rim(points):
    """ Contour points on the image of a cylinder's base rim.

        That is the lower stretch of the convex hull between the horizontal
        extremes. Long straight hull edges on it are the silhouette sides
        running up to the top rim; the rim is the lowest run between them.
        Falls back to all points when fewer than 5 remain.
    """

    try:
        ring = ConvexHull(points).vertices
    except QhullError:
        return points
    hull = points[ring]
    left = min(range(len(ring)), key=lambda i: (hull[i][0], -hull[i][1]))
    right = min(range(len(ring)), key=lambda i: (-hull[i][0], -hull[i][1]))
    one = np.roll(ring, -left)[:(right - left) % len(ring) + 1]
    other = np.roll(ring, -right)[:(left - right) % len(ring) + 1]
    chain = max((one, other), key=lambda c: points[c][:, 1].mean())

    steps = np.diff(points[chain], axis=0)
    lengths = np.linalg.norm(steps, axis=1)
    sides = (lengths > SIDE_EDGE_RATIO * np.median(lengths)) & \
        (np.abs(steps[:, 1]) >= np.abs(steps[:, 0]))
    cuts = [0] + [i + 1 for i in np.flatnonzero(sides)] + [len(chain)]
    runs = [chain[s:e] for s, e in zip(cuts, cuts[1:]) if e > s]
    run = max(runs, key=lambda r: points[r][:, 1].mean())

    # Back to the contour itself, which keeps points the hull skipped
    n, first, last = len(points), run[0], run[-1]
    paths = [(first + np.arange((last - first) % n + 1)) % n,
             (last + np.arange((first - last) % n + 1)) % n]
    path = max(paths, key=lambda p: points[p][:, 1].mean())
    if len(path) < 5:
        return points
    return points[path]


Ellipse = namedtuple('Ellipse', "center semi_major semi_minor major_axis")


def fit_ellipse(points, settings=None):
    """ Direct least-squares ellipse fit (numerically stable form of the
        ellipse-specific conic fit), done on normalized coordinates.
    """

    settings = resolve(settings)
    points = np.asarray(points, dtype=float)
    if len(points) < 5:
        raise FitFailure("Ellipse fit needs at least 5 points, got {}".
                         format(len(points)))
    mean = points.mean(axis=0)
    scale = np.sqrt(np.mean(np.sum((points - mean) ** 2, axis=1)))
    if not scale > 0:
        raise FitFailure("Ellipse fit points coincide")
    x, y = ((points - mean) / scale).T

    quadratic = np.column_stack([x * x, x * y, y * y])
    linear = np.column_stack([x, y, np.ones_like(x)])
    s = np.linalg.svd(np.hstack([quadratic, linear]), compute_uv=False)
    if int(np.sum(s > settings.rank_ratio * s[0])) < 5:
        raise FitFailure("Ellipse fit is rank-deficient")

    s1 = quadratic.T @ quadratic
    s2 = quadratic.T @ linear
    s3 = linear.T @ linear
    try:
        t = -np.linalg.solve(s3, s2.T)
    except np.linalg.LinAlgError:
        raise FitFailure("Ellipse fit is rank-deficient")
    m = s1 + s2 @ t
    m = np.vstack([m[2] / 2.0, -m[1], m[0] / 2.0])
    _, vectors = np.linalg.eig(m)
    vectors = np.real(vectors)
    constraint = 4 * vectors[0] * vectors[2] - vectors[1] ** 2
    candidates = np.flatnonzero(constraint > 0)
    if len(candidates) == 0:
        raise FitFailure("Points do not fit an ellipse")
    a1 = vectors[:, candidates[0]]
    a, b, c, d, e, f = np.concatenate([a1, t @ a1])

    center = np.linalg.solve([[2 * a, b], [b, 2 * c]], [-d, -e])
    f0 = f + (d * center[0] + e * center[1]) / 2.0
    values, axes = np.linalg.eigh([[a, b / 2.0], [b / 2.0, c]])
    squared = -f0 / values
    if not np.all(squared > 0):
        raise FitFailure("Conic is not a real ellipse")
    semi = np.sqrt(squared) * scale
    major = int(np.argmax(semi))
    return Ellipse(center * scale + mean, float(semi[major]),
                   float(semi[1 - major]), axes[:, major])


def _ordered_pair(center, offset, key):
    pair = sorted([center + offset, center - offset], key=key)
    return pair


def _ellipse_keypoints(ellipse):
    center = np.asarray(ellipse.center)
    major = ellipse.semi_major * ellipse.major_axis
    minor = ellipse.semi_minor * np.array([-ellipse.major_axis[1],
                                           ellipse.major_axis[0]])
    major_a, major_b = _ordered_pair(center, major,
                                     key=lambda p: (p[0], p[1]))
    minor_a, minor_b = _ordered_pair(center, minor,
                                     key=lambda p: (p[1], p[0]))
    return [center, major_a, major_b, minor_a, minor_b]


def _check_bounds(points, contour_points, label):
    low, high = contour_points.min(axis=0), contour_points.max(axis=0)
    margin = max(1.0, 0.01 * float(np.linalg.norm(high - low)))
    for point in points:
        if np.any(point < low - margin) or np.any(point > high + margin):
            raise FitFailure("Key point {} of '{}' falls outside the contour "
                             "bounds".format(np.round(point, 3).tolist(),
                                             label))


def extract_keypoints(contour, shape, settings=None):
    """ Key points of `contour` for the given shape class (see the module
        docstring for conventions). The result does not depend on where the
        contour starts or on its orientation.
    """

    settings = resolve(settings)
    shape = ShapeClass(shape)
    points = contour.as_array()
    inferred = ()

    if shape is ShapeClass.CUBOID:
        tolerance = settings.simplify_fraction * _perimeter(points)
        polygon = points[simplify_contour(points, tolerance)]
        if len(polygon) < 4:
            raise ContourTooCoarse("Contour '{}' simplifies to {} corners; a "
                                   "cuboid base needs 4".
                                   format(contour.label, len(polygon)))
        corners, hidden = _cuboid_base(polygon)
        order = _corner_order(corners)
        keypoints = corners[order]
        if _polygon_area(keypoints) <= tolerance ** 2:
            raise ContourTooCoarse("Corners of '{}' are degenerate".
                                   format(contour.label))
        if hidden is not None:
            inferred = (shape.keypoint_names[list(order).index(hidden)],)
    else:
        if len(points) < 8:
            raise ContourTooCoarse("Contour '{}' has {} points; a cylinder "
                                   "needs at least 8".
                                   format(contour.label, len(points)))
        keypoints = _ellipse_keypoints(fit_ellipse(_lower_rim(points),
                                                   settings))

    _check_bounds(keypoints, points, contour.label)
    logger.debug("Key points of '%s' (%s): %s", contour.label, shape.value,
                 np.round(keypoints, 3).tolist())
    return KeyPointSet(shape, tuple(Point2(*p) for p in keypoints),
                       contour.label, inferred)


# Placement
def _in_plane(points, plane):
    """ 2D coordinates of on-plane points in the plane basis. """

    e1, e2 = plane.basis()
    return np.array([[np.dot(p, e1), np.dot(p, e2)] for p in points])


def _relative_gap(a, b):
    return abs(a - b) / max(a, b)


def _place_cuboid(kps, world, plane, height, settings):
    sides = [np.linalg.norm(world[(i + 1) % 4] - world[i]) for i in range(4)]
    diagonals = (np.linalg.norm(world[2] - world[0]),
                 np.linalg.norm(world[3] - world[1]))
    gaps = (_relative_gap(sides[0], sides[2]),
            _relative_gap(sides[1], sides[3]),
            _relative_gap(*diagonals))
    if max(gaps) > settings.rigidity:
        raise InconsistentFootprint(
            "Backprojected base of '{}' is not a rectangle (side/diagonal "
            "mismatch {:.1%})".format(kps.label, max(gaps)))

    first = (sides[0] + sides[2]) / 2.0
    second = (sides[1] + sides[3]) / 2.0
    if first >= second:
        direction = (world[1] - world[0]) + (world[2] - world[3])
        width, depth = first, second
    else:
        direction = (world[2] - world[1]) + (world[3] - world[0])
        width, depth = second, first
    e1, e2 = plane.basis()
    yaw = math.atan2(np.dot(direction, e2), np.dot(direction, e1))
    yaw = (yaw + math.pi / 2) % math.pi - math.pi / 2

    position = plane.project_point(np.mean(world, axis=0))
    return PlacedObject(kps.label, ShapeClass.CUBOID,
                        Point3.from_array(position), yaw,
                        {'width': width, 'depth': depth, 'height': height},
                        plane)


def _place_cylinder(kps, world, plane, height, settings):
    # Ellipse extremes lie on the image of the rim, so their backprojections
    # lie on the rim circle itself
    rim = _in_plane(world[1:], plane)
    design = np.column_stack([2 * rim, np.ones(len(rim))])
    rhs = np.sum(rim ** 2, axis=1)
    (u, v, k), *_ = np.linalg.lstsq(design, rhs, rcond=None)
    radius = math.sqrt(max(k + u * u + v * v, 0.0))
    spread = np.linalg.norm(rim - [u, v], axis=1)
    if not radius > 0 or np.max(np.abs(spread - radius)) > (settings.rigidity *
                                                            radius):
        raise InconsistentFootprint("Backprojected rim of '{}' is not a "
                                    "circle".format(kps.label))

    e1, e2 = plane.basis()
    position = plane.project_point(u * e1 + v * e2 +
                                   plane.d * np.asarray(plane.normal))
    return PlacedObject(kps.label, ShapeClass.CYLINDER,
                        Point3.from_array(position), 0.0,
                        {'radius': radius, 'height': height}, plane)


def place_object(kps, cam, plane, assumed_height, settings=None):
    """ Pose and size of the object whose base key points are `kps`.

        The footprint comes from backprojecting every key point onto
        `plane`. Height cannot be observed from the footprint and is taken
        from `assumed_height`.
    """

    settings = resolve(settings)
    world = [None if name in kps.inferred else
             backproject_to_plane(cam, p, plane, settings).as_array()
             for name, p in zip(kps.names, kps.image_points)]
    for i, point in enumerate(world):
        if point is None:
            # Opposite corners of the base average to the same point
            world[i] = world[i - 1] + world[(i + 1) % 4] - world[(i + 2) % 4]
    world = np.array(world)
    if kps.shape is ShapeClass.CUBOID:
        return _place_cuboid(kps, world, plane, float(assumed_height),
                             settings)
    return _place_cylinder(kps, world, plane, float(assumed_height), settings)


def render_keypoints(obj, cam, settings=None):
    """ Key points `obj` would produce in `cam`, following the same
        conventions as `extract_keypoints`.
    """

    if obj.shape is ShapeClass.CUBOID:
        pixels = [project(cam, corner, settings).to_list()
                  for corner in obj.base_corners()]
        keypoints = order_corners(pixels)
    else:
        pixels = [project(cam, p, settings).to_list()
                  for p in obj.rim_points()]
        keypoints = _ellipse_keypoints(fit_ellipse(pixels, settings))
    return KeyPointSet(obj.shape, tuple(Point2(*p) for p in keypoints),
                       obj.label)


def _build_one(item, cam, plane, heights, settings):
    contour, shape = item
    height = heights.get(contour.label, heights.get('default'))
    if height is None:
        raise InvalidModel("No height configured for '{}'".
                           format(contour.label))
    kps = extract_keypoints(contour, shape, settings)
    return place_object(kps, cam, plane, height, settings)


def build_twin(items, cam, plane, heights, workers=None, settings=None):
    """ Place every `(Contour2D, ShapeClass)` item and assemble the scene.

        Objects that fail are reported in `TwinScene.failures`; only a scene
        where every object failed is an error. `heights` maps labels to
        measured heights (a `'default'` entry applies to unlisted labels).
    """

    settings = resolve(settings)
    items = list(items)
    labels = [contour.label for contour, _ in items]
    duplicates = sorted({label for label in labels if labels.count(label) > 1})
    if duplicates:
        raise DuplicateLabel("Duplicate contour labels: {}".
                             format(duplicates), duplicates[0])

    def attempt(item):
        try:
            return _build_one(item, cam, plane, heights, settings)
        except Sim2RealException as e:
            return e

    if workers is not None and workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as executor:
            results = list(executor.map(attempt, items))
    else:
        results = [attempt(item) for item in items]

    objects, errors = [], {}
    for label, result in zip(labels, results):
        if isinstance(result, Sim2RealException):
            logger.warning("Could not place '%s': %s", label, result)
            errors[label] = result
        else:
            objects.append(result)

    if items and not objects:
        raise SceneBuildFailure("No object could be placed", errors)
    return TwinScene(plane, tuple(objects), cam,
                     {label: error.to_dict()
                      for label, error in sorted(errors.items())})
