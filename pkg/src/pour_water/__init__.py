""" The pour-water demonstration task: a robot picks up a jar and pours its
    water into a cup.

        >>> import pour_water
        >>> from sim2real import planner
        >>> actions = planner.plan(pour_water.make_graph(),
        ...                        pour_water.initial_state())
        >>> [action.id for action in actions]
        <<< ['approaching the jar', 'picking up jar', 'moving jar above the cup',
        ...  'pouring water from the jar to the cup']
"""

from sim2real.fluents import DEFAULT_QUESTIONNAIRE, trace_vectors
from sim2real.planner import AogNode, AtomicAction, WorldState

APPROACH = "approaching the jar"
PICK = "picking up jar"
PICK_SIDE = "picking up jar from the side"
MOVE = "moving jar above the cup"
POUR = "pouring water from the jar to the cup"

# Checkpoint question -> fluent
BINDINGS = {
    'ready_to_pick': 'robot_ready_to_pick',
    'jar_picked': 'jar_held',
    'jar_above_cup': 'jar_above_cup',
    'pouring': 'pouring_water',
}

# Measured object heights (m); a footprint alone does not give them
DEFAULT_HEIGHTS = {'jar': 0.16, 'cup': 0.10}


def _pick(name):
    return AtomicAction(name,
                        preconditions={'robot_ready_to_pick': True,
                                       'jar_held': False},
                        effects={'jar_held': True,
                                 'robot_ready_to_pick': False},
                        spatial_refs=['jar'])


def make_graph():
    approach = AtomicAction(APPROACH,
                            preconditions={'jar_held': False},
                            effects={'robot_ready_to_pick': True},
                            spatial_refs=['jar'])
    move = AtomicAction(MOVE,
                        preconditions={'jar_held': True},
                        effects={'jar_above_cup': True},
                        spatial_refs=['cup'])
    pour = AtomicAction(POUR,
                        preconditions={'jar_held': True,
                                       'jar_above_cup': True,
                                       'water_in_jar': True},
                        effects={'water_in_jar': False,
                                 'water_in_cup': True,
                                 'pouring_water': True},
                        spatial_refs=['cup'])

    pick = AogNode.or_("pick up jar", [AogNode.terminal(_pick(PICK)),
                                        AogNode.terminal(_pick(PICK_SIDE))])
    return AogNode.and_("pour water from the jar to the cup",
                        [AogNode.terminal(approach), pick,
                         AogNode.terminal(move), AogNode.terminal(pour)],
                        ordering=[(0, 1), (1, 2), (2, 3)])


def initial_state(scene=None, water_in_jar=True):
    return WorldState({'water_in_jar': water_in_jar,
                       'water_in_cup': False,
                       'jar_held': False,
                       'robot_ready_to_pick': False,
                       'jar_above_cup': False,
                       'pouring_water': False}, scene)


def expected_vectors(trace):
    """ Simulated checkpoint answers after each step of a planned trace. """

    return trace_vectors(trace, DEFAULT_QUESTIONNAIRE, BINDINGS)
