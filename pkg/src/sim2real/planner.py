""" Task representation as an And-Or graph of atomic actions, and its
    decomposition into an executable action sequence.

    - `And` nodes run every child; `ordering` is a list of `(before, after)`
      child index pairs (a partial order, the temporal relation).
    - `Or` nodes run exactly one child, picked by a selection policy.
    - `Terminal` nodes carry an `AtomicAction` with fluent preconditions
      (causal relation) and object references (spatial relation).

    Fluents use closed-world semantics: a fluent missing from a state reads
    as false.
"""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field

from .exceptions import (InvalidGraph, InvalidModel, NoFeasibleOrBranch,
                         PreconditionUnsatisfiable)
from .utils import is_dict

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Fluent(object):
    id: str
    value: bool = True

    def __post_init__(self):
        if not self.id:
            raise InvalidModel("Fluent id cannot be empty")
        object.__setattr__(self, 'value', bool(self.value))


def _fluents(value, what):
    """ `{id: bool}` or a list of `Fluent` -> tuple of `Fluent` sorted by id,
        rejecting ids that appear twice.
    """

    if is_dict(value):
        items = [Fluent(key, item) for key, item in value.items()]
    else:
        items = [item if isinstance(item, Fluent) else Fluent(*item)
                 for item in value]
    ids = [item.id for item in items]
    repeated = sorted({i for i in ids if ids.count(i) > 1})
    if repeated:
        raise InvalidModel("Contradictory or repeated {} for {}".
                           format(what, repeated))
    return tuple(sorted(items, key=lambda item: item.id))


@dataclass(frozen=True)
class AtomicAction(object):
    id: str
    preconditions: tuple = ()
    effects: tuple = ()
    spatial_refs: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, 'preconditions',
                           _fluents(self.preconditions, 'preconditions'))
        object.__setattr__(self, 'effects', _fluents(self.effects, 'effects'))
        object.__setattr__(self, 'spatial_refs', tuple(self.spatial_refs))

    def to_dict(self):
        return {'id': self.id,
                'preconditions': {f.id: f.value for f in self.preconditions},
                'effects': {f.id: f.value for f in self.effects},
                'spatial_refs': list(self.spatial_refs)}

    @classmethod
    def from_dict(cls, data):
        return cls(data['id'], data.get('preconditions', {}),
                   data.get('effects', {}), data.get('spatial_refs', []))


class NodeKind(str, enum.Enum):
    AND = "and"
    OR = "or"
    TERMINAL = "terminal"


class AogNode(object):
    """ Graph node. Nodes are plain mutable objects so that graphs can be
        assembled incrementally (and, by mistake, with cycles; see
        `validate_graph()`).

            >>> pick = AogNode.terminal(AtomicAction('pick', effects={'held': True}))
            >>> place = AogNode.terminal(AtomicAction('place', {'held': True}))
            >>> root = AogNode.and_('task', [pick, place], ordering=[(0, 1)])
    """

    def __init__(self, kind, children=None, action=None, ordering=None,
                 name=None):
        self.kind = NodeKind(kind)
        self.children = list(children or [])
        self.action = action
        self.ordering = [tuple(pair) for pair in (ordering or [])]
        if name is None and action is not None:
            name = action.id
        self.name = name

    @classmethod
    def terminal(cls, action):
        return cls(NodeKind.TERMINAL, action=action)

    @classmethod
    def and_(cls, name, children, ordering=None):
        return cls(NodeKind.AND, children, ordering=ordering, name=name)

    @classmethod
    def or_(cls, name, children):
        return cls(NodeKind.OR, children, name=name)

    def __repr__(self):
        return "<AogNode {} '{}'>".format(self.kind.value, self.name)

    def to_dict(self):
        result = {'kind': self.kind.value}
        if self.name is not None:
            result['name'] = self.name
        if self.kind is NodeKind.TERMINAL:
            result['action'] = (self.action.to_dict()
                                if self.action is not None else None)
        else:
            result['children'] = [child.to_dict() for child in self.children]
        if self.ordering:
            result['ordering'] = [list(pair) for pair in self.ordering]
        return result

    @classmethod
    def from_dict(cls, data):
        action = data.get('action')
        children = [cls.from_dict(child) for child in data.get('children', [])]
        return cls(data['kind'], children,
                   AtomicAction.from_dict(action) if action else None,
                   data.get('ordering'),
                   data.get('name'))


@dataclass(frozen=True)
class Violation(object):
    node: str
    rule: str
    detail: str

    def to_dict(self):
        return {'node': self.node, 'rule': self.rule, 'detail': self.detail}


def _linear_extension(count, ordering):
    """ Kahn's algorithm, smallest available index first. Returns `None` when
        `ordering` has a cycle.
    """

    successors = {i: [] for i in range(count)}
    indegree = [0] * count
    for before, after in ordering:
        successors[before].append(after)
        indegree[after] += 1
    ready = sorted(i for i in range(count) if indegree[i] == 0)
    result = []
    while ready:
        current = ready.pop(0)
        result.append(current)
        for after in successors[current]:
            indegree[after] -= 1
            if indegree[after] == 0:
                ready.append(after)
        ready.sort()
    return result if len(result) == count else None


def _check_node(node, where):
    kind = node.kind
    if kind is NodeKind.TERMINAL:
        if node.children:
            yield Violation(where, 'terminal_children',
                            "Terminal node has children")
        if node.action is None:
            yield Violation(where, 'terminal_action',
                            "Terminal node has no action")
    else:
        if not node.children:
            yield Violation(where, 'empty_node',
                            "{} node has no children".format(kind.value))
        if node.action is not None:
            yield Violation(where, 'inner_action',
                            "{} node carries an action".format(kind.value))
    if kind is NodeKind.OR and len(node.children) < 2:
        yield Violation(where, 'or_arity', "Or node has {} child(ren); at "
                        "least 2 are required".format(len(node.children)))
    if kind is not NodeKind.AND and node.ordering:
        yield Violation(where, 'ordering_scope',
                        "Only And nodes can carry an ordering")

    if kind is NodeKind.AND and node.ordering:
        count = len(node.children)
        pairs = []
        for pair in node.ordering:
            if (len(pair) != 2 or
                    not all(isinstance(i, int) and 0 <= i < count
                            for i in pair) or pair[0] == pair[1]):
                yield Violation(where, 'ordering_pair',
                                "Invalid ordering pair {}".format(list(pair)))
            else:
                pairs.append(pair)
        if _linear_extension(count, pairs) is None:
            yield Violation(where, 'ordering_cycle',
                            "Ordering is not a partial order (it has a "
                            "cycle)")


def validate_graph(root):
    """ Structural violations of the graph under `root` (empty when valid).

            >>> validate_graph(AogNode.or_('root', [a, b]))
            <<< [Violation(node='root', rule='root_kind', ...)]
    """

    violations = []
    if root.kind is not NodeKind.AND:
        violations.append(Violation(root.name or "root", 'root_kind',
                                    "Root must be an And node, got {}".
                                    format(root.kind.value)))

    active = set()
    checked = set()

    def visit(node, path):
        where = node.name or path
        if id(node) in active:
            violations.append(Violation(where, 'cycle',
                                        "Node is its own ancestor"))
            return
        if id(node) in checked:
            return
        active.add(id(node))
        violations.extend(_check_node(node, where))
        for i, child in enumerate(node.children):
            visit(child, "{}/{}".format(path, i))
        active.discard(id(node))
        checked.add(id(node))

    visit(root, "root")
    return violations


@dataclass(frozen=True)
class WorldState(object):
    """ Fluent values plus the scene that spatial references resolve
        against (optional).
    """

    fluents: tuple = ()
    scene: object = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, 'fluents', _fluents(self.fluents, 'fluents'))

    def value(self, fluent_id):
        for item in self.fluents:
            if item.id == fluent_id:
                return item.value
        return False

    def as_dict(self):
        return {item.id: item.value for item in self.fluents}

    def missing(self, action):
        """ Unmet preconditions of `action`: fluent ids, plus
            `object:<label>` for spatial references the scene lacks.
        """

        result = [requirement.id for requirement in action.preconditions
                  if self.value(requirement.id) != requirement.value]
        if self.scene is not None:
            labels = set(self.scene.labels)
            result.extend("object:{}".format(label)
                          for label in action.spatial_refs
                          if label not in labels)
        return result

    def apply(self, action):
        values = self.as_dict()
        values.update({effect.id: effect.value for effect in action.effects})
        return WorldState(values, self.scene)

    def to_dict(self):
        return {'fluents': self.as_dict()}

    @classmethod
    def from_dict(cls, data, scene=None):
        return cls(data.get('fluents', data), scene)


@dataclass(frozen=True)
class TraceStep(object):
    index: int
    action: AtomicAction
    before: dict
    after: dict
    waypoints: dict = field(default_factory=dict)

    def to_dict(self):
        return {'index': self.index, 'action': self.action.id,
                'before': dict(self.before), 'after': dict(self.after),
                'waypoints': {label: point.to_list()
                              for label, point in self.waypoints.items()}}


def first_feasible(node, state):
    """ Or-selection policy: children in declaration order. The planner
        backtracks, so this selects the first child whose subtree leads to a
        feasible plan.
    """

    return range(len(node.children))


class _Search(object):
    """ Backtracking expansion. Each `expand()` generator yields
        `(actions, state)` for every way the node can be completed from
        `state`, in policy order. Failures are remembered so that the most
        advanced one can be reported when nothing works.
    """

    def __init__(self, policy):
        self.policy = policy
        self.failure = None
        self.progress = -1

    def fail(self, error, progress):
        if progress > self.progress or (
                progress == self.progress and
                isinstance(error, NoFeasibleOrBranch)):
            self.failure, self.progress = error, progress

    def expand(self, node, state, done):
        if node.kind is NodeKind.TERMINAL:
            missing = state.missing(node.action)
            if missing:
                self.fail(PreconditionUnsatisfiable(
                    "Preconditions of '{}' are not met: {}".
                    format(node.action.id, missing),
                    node.action.id, missing, done), done)
                return
            yield [node.action], state.apply(node.action)

        elif node.kind is NodeKind.AND:
            order = _linear_extension(len(node.children), node.ordering)
            yield from self._sequence([node.children[i] for i in order],
                                      state, done, [])

        else:
            found = False
            for i in self.policy(node, state):
                logger.debug("Trying branch %d of '%s'", i, node.name)
                for result in self.expand(node.children[i], state, done):
                    found = True
                    yield result
            if not found:
                self.fail(NoFeasibleOrBranch(
                    "No child of Or node '{}' is feasible".format(node.name),
                    node.name), done)

    def _sequence(self, children, state, done, acc):
        if not children:
            yield acc, state
            return
        for actions, after in self.expand(children[0], state, done):
            yield from self._sequence(children[1:], after,
                                      done + len(actions), acc + actions)


def plan(root, initial, policy=first_feasible):
    """ Depth-first expansion of the graph into atomic actions, each
        executable in the state left by the ones before it.

        `policy(or_node, state)` yields child indices in the order they
        should be tried. Raises `InvalidGraph` for structurally invalid
        graphs; when no complete plan exists, the failure that got furthest
        is raised (`PreconditionUnsatisfiable` or `NoFeasibleOrBranch`).
    """

    violations = validate_graph(root)
    if violations:
        raise InvalidGraph("Task graph has {} violation(s)".
                           format(len(violations)), violations)

    search = _Search(policy)
    for actions, _ in search.expand(root, initial, 0):
        logger.debug("Plan: %s", [action.id for action in actions])
        return actions
    raise search.failure


def resolve_waypoints(action, scene):
    """ `{label: Point3}` positions of the objects `action` refers to. """

    if scene is None:
        return {}
    result = {}
    for label in action.spatial_refs:
        try:
            result[label] = scene.get(label).position
        except KeyError:
            raise PreconditionUnsatisfiable(
                "'{}' refers to unknown object '{}'".format(action.id, label),
                action.id, ["object:{}".format(label)])
    return result


def simulate_effects(actions, initial):
    """ Apply `actions` in order and record the fluents before and after each
        one. Returns `(final_state, trace)`.
    """

    state, trace = initial, []
    for index, action in enumerate(actions):
        missing = state.missing(action)
        if missing:
            raise PreconditionUnsatisfiable(
                "Step {} ('{}') has unmet preconditions: {}".
                format(index, action.id, missing), action.id, missing, index)
        after = state.apply(action)
        trace.append(TraceStep(index, action, state.as_dict(),
                               after.as_dict(),
                               resolve_waypoints(action, state.scene)))
        state = after
    return state, trace
