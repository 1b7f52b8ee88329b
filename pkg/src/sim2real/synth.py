""" Synthetic digital twins with known ground truth.

    A trial samples a real camera looking at a table, a simulated camera that
    differs from it by a small rotation and focal-length error, reference
    points on the table seen by both cameras (with Gaussian pixel noise on the
    real side), and a cube placed on the table whose 6 visible corners serve
    as holdout. `run_ablation` compares the three homography families on
    many trials; `run_sensitivity` measures how pixel noise moves objects
    placed by `twin.place_object`.

    Randomness: trial `i` of seed `s` draws from
    `PCG64(SeedSequence(s, spawn_key=(i,)))`, independently of every other
    trial, so results do not depend on execution order or platform.
"""

from __future__ import annotations

import dataclasses
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.transform import Rotation

from .exceptions import (BehindCamera, ConfigInfeasible, EmptyAblation,
                         InvalidModel, Sim2RealException)
from .geometry import (CameraModel, Extrinsics, Family, Intrinsics, Plane,
                       Point2, Point3, project)
from .regression import (DOF, Correspondence2D2D, evaluate_alignment,
                         fit_homography)
from .settings import resolve
from .twin import KeyPointSet, PlacedObject, ShapeClass, place_object, \
    render_keypoints

logger = logging.getLogger(__name__)

TABLE = Plane((0.0, 0.0, 1.0), 0.0)
FAMILIES = (Family.TWO_DOF, Family.AFFINE, Family.PROJECTIVE)
FAMILY_TITLES = {Family.TWO_DOF: "Simple linear", Family.AFFINE: "Affine",
                 Family.PROJECTIVE: "Projective"}


@dataclass(frozen=True)
class SynthConfig(object):
    """ Lengths in meters, angles in radians, focal lengths and noise in
        pixels. The table is centered at the world origin on the plane z = 0;
        the real camera sits at `(0, -camera_distance, camera_height)`
        (jittered by up to `pose_jitter` per axis) and looks at the table
        center.
    """

    seed: int = 0
    n_trials: int = 100
    table_width: float = 1.0
    table_depth: float = 0.6
    camera_height: float = 1.0
    camera_distance: float = 0.6
    pose_jitter: float = 0.05
    focal_range: tuple = (450.0, 550.0)
    aspect_jitter: float = 0.01
    principal_jitter: float = 10.0
    image_size: tuple = (800, 600)
    rotation_rad: float = 0.15
    translation_m: float = 0.0
    focal_pct: float = 0.05
    noise_sigma: float = 0.0
    n_reference_points: int = 9
    cube_side: float = 0.065
    workers: int = None
    # run_sensitivity
    noise_grid: tuple = (0.0, 0.5, 1.0, 2.0)
    height_grid: tuple = (1.0,)
    focal_grid: tuple = (500.0,)
    box_size: tuple = (0.20, 0.12)

    def __post_init__(self):
        for name in ('focal_range', 'image_size', 'noise_grid', 'height_grid',
                     'focal_grid', 'box_size'):
            object.__setattr__(self, name, tuple(getattr(self, name)))

        magnitudes = ('table_width', 'table_depth', 'camera_height',
                      'camera_distance', 'pose_jitter', 'aspect_jitter',
                      'principal_jitter', 'rotation_rad', 'translation_m',
                      'focal_pct', 'noise_sigma', 'cube_side')
        negative = [name for name in magnitudes
                    if not getattr(self, name) >= 0]
        negative += [name for name in ('noise_grid', 'height_grid',
                                       'focal_grid', 'box_size')
                     if not all(value >= 0 for value in getattr(self, name))]
        if negative:
            raise InvalidModel("Config magnitudes must be nonnegative: {}".
                               format(negative))
        if self.n_trials < 1:
            raise InvalidModel("n_trials must be at least 1")
        if self.n_reference_points < 1:
            raise InvalidModel("n_reference_points must be at least 1")
        low, high = self.focal_range
        if not 0 < low <= high:
            raise InvalidModel("focal_range must be 0 < low <= high")
        if len(self.image_size) != 2 or min(self.image_size) <= 0:
            raise InvalidModel("image_size must be (width, height) > 0")
        if not (self.noise_grid and self.height_grid and self.focal_grid):
            raise InvalidModel("Sensitivity grids cannot be empty")

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)

    def to_dict(self):
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data):
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(data) - names)
        if unknown:
            raise ValueError("Unknown config fields: {}".format(unknown))
        return cls(**data)


def trial_rng(seed, trial_index):
    return np.random.Generator(np.random.PCG64(
        np.random.SeedSequence(seed, spawn_key=(trial_index,))))


@dataclass(frozen=True)
class TrialRecord(object):
    """ `truth` is the table-plane homography between the two cameras. Fit
        results are filled in by `evaluate_trial`.
    """

    index: int
    real_camera: CameraModel
    sim_camera: CameraModel
    truth: object
    reference_points: tuple
    training: tuple
    cube_corners: tuple
    holdout: tuple
    reports: dict = field(default_factory=dict)
    holdout_stats: dict = field(default_factory=dict)

    def to_dict(self):
        return {'index': self.index,
                'real_camera': self.real_camera.to_dict(),
                'sim_camera': self.sim_camera.to_dict(),
                'truth': self.truth.to_dict(),
                'reference_points': [p.to_list()
                                     for p in self.reference_points],
                'training': [pair.to_dict() for pair in self.training],
                'cube_corners': [p.to_list() for p in self.cube_corners],
                'holdout': [pair.to_dict() for pair in self.holdout],
                'reports': {family.value: report.to_dict()
                            for family, report in self.reports.items()},
                'holdout_stats': {family.value: stats.to_dict()
                                  for family, stats in
                                  self.holdout_stats.items()}}


def _pixel(cam, p, cfg=None):
    try:
        pixel = project(cam, p)
    except BehindCamera:
        raise ConfigInfeasible("Point {} is behind a sampled camera".
                               format(Point3.from_array(p).to_list()))
    if cfg is not None:
        width, height = cfg.image_size
        if not (0 <= pixel.x <= width and 0 <= pixel.y <= height):
            raise ConfigInfeasible("Point {} falls outside the real image".
                                   format(Point3.from_array(p).to_list()))
    return pixel


def _real_camera(cfg, rng):
    jitter = rng.uniform(-cfg.pose_jitter, cfg.pose_jitter, 3)
    eye = np.array([0.0, -cfg.camera_distance, cfg.camera_height]) + jitter
    fx = rng.uniform(*cfg.focal_range)
    fy = fx * (1 + rng.uniform(-cfg.aspect_jitter, cfg.aspect_jitter))
    cx, cy = (np.array(cfg.image_size) / 2.0 +
              rng.uniform(-cfg.principal_jitter, cfg.principal_jitter, 2))
    return CameraModel(Intrinsics(fx, fy, cx, cy),
                       Extrinsics.look_at(eye, (0.0, 0.0, 0.0)))


def _sim_camera(cfg, real, rng):
    """ The real camera tilted by exactly `rotation_rad` about a random axis
        across the optical axis, with focal lengths off by `focal_pct` and
        the center moved by `translation_m` in a random direction.
    """

    phi = rng.uniform(0.0, 2 * np.pi)
    tilt = Rotation.from_rotvec(cfg.rotation_rad *
                                np.array([math.cos(phi), math.sin(phi), 0.0]))
    r = tilt.as_matrix() @ real.extrinsics.r
    shift = rng.normal(size=3)
    center = (real.extrinsics.center +
              cfg.translation_m * shift / np.linalg.norm(shift))
    scale = 1 + cfg.focal_pct * rng.choice([-1.0, 1.0])
    k = real.intrinsics
    return CameraModel(Intrinsics(k.fx * scale, k.fy * scale, k.cx, k.cy),
                       Extrinsics(r, -r @ center))


def _reference_points(cfg, rng):
    """ Table corners, edge midpoints and center, then random extras. """

    w, d = cfg.table_width / 2.0, cfg.table_depth / 2.0
    fixed = [(-w, -d), (w, -d), (w, d), (-w, d),
             (0.0, -d), (w, 0.0), (0.0, d), (-w, 0.0), (0.0, 0.0)]
    extra = max(cfg.n_reference_points - len(fixed), 0)
    xs = rng.uniform(-w, w, extra)
    ys = rng.uniform(-d, d, extra)
    points = fixed[:cfg.n_reference_points] + list(zip(xs, ys))
    return [np.array([x, y, 0.0]) for x, y in points]


def _cube(cfg, rng):
    margin = min(0.15, cfg.table_width / 4.0, cfg.table_depth / 4.0)
    x = rng.uniform(-cfg.table_width / 2.0 + margin,
                    cfg.table_width / 2.0 - margin)
    y = rng.uniform(-cfg.table_depth / 2.0 + margin,
                    cfg.table_depth / 2.0 - margin)
    yaw = rng.uniform(-np.pi / 2, np.pi / 2)
    side = cfg.cube_side
    return PlacedObject("cube", ShapeClass.CUBOID, Point3(x, y, 0.0), yaw,
                        {'width': side, 'depth': side, 'height': side}, TABLE)


def _visible_corners(cube, cam):
    """ Top corners and the two bottom corners nearest to the camera; the
        two rear bottom corners are hidden by the cube.
    """

    bottom = [p.as_array() for p in cube.base_corners()]
    lift = cube.dimensions['height'] * np.asarray(TABLE.normal)
    center = cam.extrinsics.center
    near = sorted(range(4), key=lambda i: np.linalg.norm(bottom[i] - center))
    return [p + lift for p in bottom] + [bottom[i] for i in sorted(near[:2])]


def _table_homography(cfg, sim, real):
    w, d = cfg.table_width / 2.0, cfg.table_depth / 2.0
    corners = [np.array([x, y, 0.0]) for x, y in ((-w, -d), (w, -d), (w, d),
                                                  (-w, d))]
    pairs = [Correspondence2D2D(_pixel(sim, p), _pixel(real, p))
             for p in corners]
    return fit_homography(pairs, Family.PROJECTIVE).model


def generate_trial(cfg, trial_index):
    """ Sample trial `trial_index`; the same (config, index) always gives the
        same record.
    """

    rng = trial_rng(cfg.seed, trial_index)
    real = _real_camera(cfg, rng)
    sim = _sim_camera(cfg, real, rng)
    world = _reference_points(cfg, rng)
    cube = _cube(cfg, rng)
    noise = rng.normal(0.0, cfg.noise_sigma, (len(world), 2))

    training = []
    for p, offset in zip(world, noise):
        clean = _pixel(real, p, cfg)
        training.append(Correspondence2D2D(
            _pixel(sim, p), Point2(clean.x + offset[0], clean.y + offset[1])))

    corners = _visible_corners(cube, real)
    holdout = [Correspondence2D2D(_pixel(sim, p), _pixel(real, p, cfg))
               for p in corners]

    return TrialRecord(index=trial_index, real_camera=real, sim_camera=sim,
                       truth=_table_homography(cfg, sim, real),
                       reference_points=tuple(Point3.from_array(p)
                                              for p in world),
                       training=tuple(training),
                       cube_corners=tuple(Point3.from_array(p)
                                          for p in corners),
                       holdout=tuple(holdout))


def evaluate_trial(record, families=FAMILIES, settings=None):
    """ Fit every family on the training pairs and score it on the holdout.
    """

    reports, stats = {}, {}
    for family in families:
        report = fit_homography(record.training, family, settings=settings)
        reports[family] = report
        stats[family] = evaluate_alignment(report.model, record.holdout,
                                           settings)
    return dataclasses.replace(record, reports=reports, holdout_stats=stats)


def _map(function, items, workers):
    if workers is not None and workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as executor:
            return list(executor.map(function, items))
    return [function(item) for item in items]


@dataclass(frozen=True)
class AblationRow(object):
    """ Statistics over trials of the per-trial mean holdout error. """

    family: Family
    dof: int
    mean: float
    std: float
    mse: float

    def to_dict(self):
        return {'family': self.family.value, 'dof': self.dof,
                'mean': self.mean, 'std': self.std, 'mse': self.mse}


@dataclass(frozen=True)
class AblationTable(object):
    rows: tuple
    n_trials: int
    trial_errors: dict
    win_rates: dict
    skipped: tuple = ()

    @property
    def n_evaluated(self):
        return self.n_trials - len(self.skipped)

    def row(self, family):
        family = Family(family)
        for row in self.rows:
            if row.family is family:
                return row
        raise KeyError(family)

    def to_dict(self):
        return {'rows': [row.to_dict() for row in self.rows],
                'n_trials': self.n_trials,
                'n_evaluated': self.n_evaluated,
                'n_skipped': len(self.skipped),
                'skipped': [dict(item) for item in self.skipped],
                'win_rates': dict(self.win_rates),
                'trial_errors': {family.value: list(errors)
                                 for family, errors in
                                 self.trial_errors.items()}}

    def format_table(self):
        header = ["Regression method", "Degree of Freedom",
                  "Holdout error (px)", "MSE (px^2)"]
        lines = [[FAMILY_TITLES[row.family], str(row.dof),
                  "{:.3f} +- {:.3f}".format(row.mean, row.std),
                  "{:.3f}".format(row.mse)] for row in self.rows]
        widths = [max(len(line[i]) for line in [header] + lines)
                  for i in range(len(header))]
        text = ["  ".join(cell.ljust(width)
                          for cell, width in zip(line, widths)).rstrip()
                for line in [header] + lines]
        text.append("")
        text.append("Trials: {} evaluated, {} skipped".
                    format(self.n_evaluated, len(self.skipped)))
        for name, value in sorted(self.win_rates.items()):
            text.append("{}: {:.1%}".format(name, value))
        return "\n".join(text) + "\n"


def _ablation_trial(cfg, index, settings):
    try:
        return evaluate_trial(generate_trial(cfg, index), settings=settings)
    except Sim2RealException as e:
        logger.warning("Skipping trial %d: %s", index, e)
        return e


def run_ablation(cfg, settings=None):
    """ Holdout error of every homography family over `cfg.n_trials`
        trials. Trials that cannot be generated or fitted are skipped and
        listed; `EmptyAblation` is raised when nothing is left.
    """

    settings = resolve(settings)
    results = _map(lambda index: _ablation_trial(cfg, index, settings),
                   range(cfg.n_trials), cfg.workers)

    skipped, records = [], []
    for index, result in enumerate(results):
        if isinstance(result, Sim2RealException):
            skipped.append({'trial': index, 'error': result.to_dict()})
        else:
            records.append(result)
    if not records:
        raise EmptyAblation("All {} trials were skipped".
                            format(cfg.n_trials), len(skipped))

    errors = {family: np.array([r.holdout_stats[family].mean
                                for r in records])
              for family in FAMILIES}
    squares = {family: np.array([r.holdout_stats[family].mse
                                 for r in records])
               for family in FAMILIES}
    rows = tuple(AblationRow(family, DOF[family],
                             float(np.mean(errors[family])),
                             float(np.std(errors[family])),
                             float(np.mean(squares[family])))
                 for family in FAMILIES)

    projective = errors[Family.PROJECTIVE]
    affine = errors[Family.AFFINE]
    two_dof = errors[Family.TWO_DOF]
    win_rates = {
        'projective_beats_affine': float(np.mean(projective < affine)),
        'affine_beats_two_dof': float(np.mean(affine < two_dof)),
        'ordered': float(np.mean((projective < affine) & (affine < two_dof))),
    }
    logger.info("Ablation: %d trials evaluated, %d skipped", len(records),
                len(skipped))
    return AblationTable(rows, cfg.n_trials,
                         {family: tuple(float(e) for e in errors[family])
                          for family in FAMILIES},
                         win_rates, tuple(skipped))


@dataclass(frozen=True)
class SensitivityRow(object):
    noise_sigma: float
    camera_height: float
    focal: float
    mean_error: float
    std_error: float
    max_error: float
    n_trials: int

    def to_dict(self):
        return dataclasses.asdict(self)


@dataclass(frozen=True)
class SensitivityReport(object):
    rows: tuple

    def to_dict(self):
        return {'rows': [row.to_dict() for row in self.rows]}

    def format_table(self):
        header = "{:>8}  {:>8}  {:>8}  {:>12}  {:>12}".format(
            "sigma", "height", "focal", "mean (mm)", "max (mm)")
        lines = ["{:>8.2f}  {:>8.3f}  {:>8.1f}  {:>12.4f}  {:>12.4f}".format(
            row.noise_sigma, row.camera_height, row.focal,
            1000 * row.mean_error, 1000 * row.max_error) for row in self.rows]
        return "\n".join([header] + lines) + "\n"


def _sensitivity_draws(cfg, index):
    rng = trial_rng(cfg.seed, index)
    position = (rng.uniform(-0.15, 0.15), rng.uniform(-0.10, 0.10), 0.0)
    yaw = rng.uniform(-np.pi / 2, np.pi / 2)
    return position, yaw, rng.standard_normal((4, 2))


def run_sensitivity(cfg, settings=None):
    """ Position error of `place_object` for a box seen through a noise-free
        camera at every (noise, camera height, focal length) of the config
        grids. Each trial reuses the same object and the same standard
        normal draws across the grid, so only the scale of the perturbation
        changes along the noise axis. The rigidity check is disabled here:
        the sweep measures placement error, not footprint rejection.
    """

    settings = resolve(settings).copy(rigidity=1.0)
    width, depth = cfg.box_size
    draws = [_sensitivity_draws(cfg, index) for index in range(cfg.n_trials)]
    cells = [(sigma, height, focal) for height in cfg.height_grid
             for focal in cfg.focal_grid for sigma in cfg.noise_grid]

    def run_cell(cell):
        sigma, height, focal = cell
        cx, cy = np.array(cfg.image_size) / 2.0
        cam = CameraModel(Intrinsics(focal, focal, cx, cy),
                          Extrinsics.look_at((0.0, -cfg.camera_distance,
                                              height), (0.0, 0.0, 0.0)))
        errors = []
        for position, yaw, z in draws:
            box = PlacedObject("box", ShapeClass.CUBOID, Point3(*position),
                               yaw, {'width': width, 'depth': depth,
                                     'height': 0.1}, TABLE)
            exact = render_keypoints(box, cam, settings)
            moved = tuple(Point2(p.x + sigma * dx, p.y + sigma * dy)
                          for p, (dx, dy) in zip(exact.image_points, z))
            noisy = KeyPointSet(ShapeClass.CUBOID, moved, "box")
            placed = place_object(noisy, cam, TABLE, 0.1, settings)
            errors.append(float(np.linalg.norm(placed.position.as_array() -
                                               box.position.as_array())))
        errors = np.array(errors)
        return SensitivityRow(float(sigma), float(height), float(focal),
                              float(np.mean(errors)), float(np.std(errors)),
                              float(np.max(errors)), len(errors))

    return SensitivityReport(tuple(_map(run_cell, cells, cfg.workers)))
