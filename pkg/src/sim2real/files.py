from __future__ import annotations

import json
import logging
import os

from .exceptions import InvalidInput, Sim2RealException
from .utils import to_builtin

logger = logging.getLogger(__name__)


def load_json(path):
    try:
        with open(path) as f:
            return json.load(f)
    except OSError as e:
        raise InvalidInput("Cannot read '{}': {}".format(path, e.strerror),
                           str(path))
    except ValueError as e:
        raise InvalidInput("'{}' is not valid JSON: {}".format(path, e),
                           str(path))


def load(path, parse):
    """ Read a JSON file and build domain objects out of it with `parse`.
        Malformed records become `InvalidInput` naming the file.

            >>> pairs = load("pairs.json", lambda data: [
            ...     Correspondence2D2D.from_dict(item) for item in data
            ... ])
    """

    data = load_json(path)
    try:
        return parse(data)
    except Sim2RealException:
        raise
    except (KeyError, IndexError, TypeError, ValueError) as e:
        raise InvalidInput("Malformed content in '{}': {}".
                           format(path, _describe(e)), str(path))


def dumps(value):
    return json.dumps(to_builtin(value), sort_keys=True, indent=2) + "\n"


def dump(value, path):
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    with open(path, 'w') as f:
        f.write(dumps(value))
    logger.debug("Wrote %s", path)
    return path


def _describe(exc):
    if isinstance(exc, KeyError):
        return "missing field {}".format(exc)
    return str(exc)
