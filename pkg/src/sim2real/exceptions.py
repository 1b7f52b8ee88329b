from __future__ import annotations


class Sim2RealException(Exception):
    """ Base of every error raised by the toolkit. Assuming something like:

            >>> try:
            ...     fit_homography(pairs, Family.PROJECTIVE)
            ... except Sim2RealException as e:
            ...     exc = e

        You can access the exception data like:

            >>> exc.code
            <<< 'insufficient_points'
            >>> exc.detail
            <<< 'projective fit needs at least 4 correspondences, got 3'
            >>> exc.to_dict()
            <<< {'error': 'insufficient_points',
            ...  'detail': 'projective fit needs ...',
            ...  'needed': 4, 'got': 3}

        Subclasses add their own fields after `detail` in `args` and list
        their names in `FIELDS` so that `to_dict()` can pick them up.
    """

    code = "sim2real_error"
    FIELDS = ()

    def __init__(self, detail, *fields):
        super().__init__(detail, *fields)

    detail = property(lambda self: self.args[0])

    def __str__(self):
        return str(self.detail)

    def to_dict(self):
        result = {'error': self.code, 'detail': self.detail}
        for name in self.FIELDS:
            value = getattr(self, name)
            if value is not None:
                result[name] = value
        return result


def field(index):
    return property(lambda self: (self.args[index]
                                  if len(self.args) > index else None))


class InvalidModel(Sim2RealException):
    code = "invalid_model"


class InvalidInput(Sim2RealException):
    code = "invalid_input"
    FIELDS = ('path',)

    path = field(1)


# Geometry
class DegeneratePoint(Sim2RealException):
    code = "degenerate_point"
    FIELDS = ('index',)

    index = field(1)

    def at(self, index):
        """ Same error, tagged with the position of the offending point. """

        return self.__class__(self.detail, index)


class BehindCamera(DegeneratePoint):
    code = "behind_camera"


class RayParallelToPlane(Sim2RealException):
    code = "ray_parallel_to_plane"


# Regression
class InsufficientPoints(Sim2RealException):
    code = "insufficient_points"
    FIELDS = ('needed', 'got')

    needed = field(1)
    got = field(2)


class DegenerateConfiguration(Sim2RealException):
    code = "degenerate_configuration"
    FIELDS = ('rank',)

    rank = field(1)


class ConstraintViolation(Sim2RealException):
    code = "constraint_violation"


# Twin
class ContourTooCoarse(Sim2RealException):
    code = "contour_too_coarse"


class FitFailure(Sim2RealException):
    code = "fit_failure"


class InconsistentFootprint(Sim2RealException):
    code = "inconsistent_footprint"


class DuplicateLabel(Sim2RealException):
    code = "duplicate_label"
    FIELDS = ('label',)

    label = field(1)


class SceneBuildFailure(Sim2RealException):
    code = "scene_build_failure"
    FIELDS = ('errors',)

    errors = field(1)

    def to_dict(self):
        result = super().to_dict()
        result['errors'] = {label: error.to_dict()
                            for label, error in sorted(self.errors.items())}
        return result


# Planner
class InvalidGraph(Sim2RealException):
    code = "invalid_graph"
    FIELDS = ('violations',)

    violations = field(1)

    def to_dict(self):
        result = super().to_dict()
        result['violations'] = [v.to_dict() for v in self.violations]
        return result


class PreconditionUnsatisfiable(Sim2RealException):
    code = "precondition_unsatisfiable"
    FIELDS = ('action', 'missing', 'step')

    action = field(1)
    missing = field(2)
    step = field(3)


class NoFeasibleOrBranch(Sim2RealException):
    code = "no_feasible_or_branch"
    FIELDS = ('node',)

    node = field(1)


# Fluents
class AdapterUnavailable(Sim2RealException):
    code = "adapter_unavailable"


class MissingFixture(Sim2RealException):
    code = "missing_fixture"
    FIELDS = ('image_ref',)

    image_ref = field(1)


class ShapeMismatch(Sim2RealException):
    code = "shape_mismatch"


# Synth
class ConfigInfeasible(Sim2RealException):
    code = "config_infeasible"


class EmptyAblation(Sim2RealException):
    code = "empty_ablation"
    FIELDS = ('skipped',)

    skipped = field(1)
