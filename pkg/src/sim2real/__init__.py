from . import fluents, geometry, planner, qa, regression, synth, twin  # noqa
from .exceptions import Sim2RealException  # noqa
from .geometry import (CameraModel, Extrinsics, Family, Homography,  # noqa
                       Intrinsics, Plane, Point2, Point3, TwoDofVariant)
from .regression import (Correction3D, FitReport, fit_correction,  # noqa
                         fit_homography, fit_intrinsics)
from .settings import DEFAULTS, Settings  # noqa
