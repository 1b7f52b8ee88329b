from __future__ import annotations

import copy


class Settings(object):
    """ Numeric tolerances shared by every operation.

            >>> settings = Settings(rank_ratio=1e-8)

        The arguments are optional and can be edited later with `.setup()`

            >>> settings = Settings()
            >>> settings.setup(rigidity=0.2)

        Operations accept `settings=None`, in which case `DEFAULTS` is used.
    """

    FIELDS = {
        # Homogeneous division, determinants and depths, relative to the
        # largest entry of the matrix involved
        'homogeneous_eps': 1e-12,
        # 3x3 elimination: smallest/largest pivot magnitude
        'pivot_ratio': 1e-10,
        # Rank test: singular value relative to the largest one
        'rank_ratio': 1e-10,
        'rotation_tol': 1e-9,
        'normal_tol': 1e-12,
        'on_plane_tol': 1e-6,
        'variance_eps': 1e-12,
        # Allowed relative deviation of a backprojected footprint
        'rigidity': 0.10,
        # Douglas-Peucker tolerance as a fraction of the contour perimeter
        'simplify_fraction': 0.01,
    }

    def __init__(self, **kwargs):
        for name, value in self.FIELDS.items():
            setattr(self, name, value)
        self.setup(**kwargs)

    def setup(self, **kwargs):
        for name, value in kwargs.items():
            if name not in self.FIELDS:
                raise ValueError("Unknown tolerance '{}'".format(name))
            value = float(value)
            if not value >= 0:
                raise ValueError("Tolerance '{}' must be nonnegative".
                                 format(name))
            setattr(self, name, value)
        return self

    def copy(self, **overrides):
        result = copy.copy(self)
        return result.setup(**overrides)

    def to_dict(self):
        return {name: getattr(self, name) for name in self.FIELDS}

    def __repr__(self):  # pragma: no cover
        changed = {name: value for name, value in self.to_dict().items()
                   if value != self.FIELDS[name]}
        return "<Settings: {}>".format(changed or "defaults")


DEFAULTS = Settings()


def resolve(settings):
    return DEFAULTS if settings is None else settings
