from __future__ import annotations

import collections.abc as abc
import enum
import math

import numpy as np


def is_dict(value):
    return isinstance(value, abc.Mapping)


def is_list(value):
    return (isinstance(value, (abc.Sequence, np.ndarray)) and
            not isinstance(value, (str, bytes)))


def is_null(value):
    return value is None


def is_finite(*values):
    return all(math.isfinite(value) for value in values)


def has_fields(value, *names):
    return is_dict(value) and set(names) <= set(value.keys())


def as_floats(value, length):
    """ Accepts `[x, y, ...]` or `{'x': ..., 'y': ...}` records. """

    if is_dict(value):
        value = [value[key] for key in "xyz"[:length]]
    if not is_list(value) or len(value) != length:
        raise ValueError("Expected {} numbers, got {!r}".format(length, value))
    return tuple(float(item) for item in value)


def frozen_array(value, shape):
    result = np.array(value, dtype=float)
    if result.shape != shape:
        raise ValueError("Expected shape {}, got {}".
                         format(shape, result.shape))
    result.setflags(write=False)
    return result


def to_builtin(value):
    """ Turn nested domain objects / numpy values into JSON-ready data. """

    if hasattr(value, 'to_dict'):
        return to_builtin(value.to_dict())
    if hasattr(value, 'to_list'):
        return to_builtin(value.to_list())
    if isinstance(value, enum.Enum):
        return value.value
    if is_dict(value):
        return {str(key): to_builtin(item) for key, item in value.items()}
    if isinstance(value, np.ndarray):
        return to_builtin(value.tolist())
    if is_list(value) or isinstance(value, (set, frozenset)):
        return [to_builtin(item) for item in value]
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        return float(value)
    return value


def summarize(errors):
    """ mean, population std and mean of squares of nonnegative errors """

    errors = np.asarray(errors, dtype=float)
    if errors.size == 0:
        return 0.0, 0.0, 0.0
    return (float(np.mean(errors)), float(np.std(errors)),
            float(np.mean(errors ** 2)))
