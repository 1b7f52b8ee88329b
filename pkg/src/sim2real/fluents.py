""" Checkpoint questionnaires and the agreement between fluents observed in
    reality and in simulation.

    At each checkpoint of an execution, every question of a `Questionnaire`
    is answered with yes/no for the real and for the simulated image. The
    consistency score of two traces is

        score = exp(-sum |F_real - F_sim|)

    summed over every (checkpoint, question) cell, where the difference of
    two booleans is their XOR.
"""

from __future__ import annotations

import enum
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

from .exceptions import InvalidModel, ShapeMismatch

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Question(object):
    id: str
    text: str

    def to_dict(self):
        return {'id': self.id, 'text': self.text}

    @classmethod
    def from_dict(cls, data):
        return cls(data['id'], data['text'])


@dataclass(frozen=True)
class Questionnaire(object):
    questions: tuple

    def __post_init__(self):
        questions = tuple(q if isinstance(q, Question) else
                          Question.from_dict(q) for q in self.questions)
        if not questions:
            raise InvalidModel("Questionnaire cannot be empty")
        ids = [q.id for q in questions]
        if len(set(ids)) != len(ids):
            raise InvalidModel("Question ids must be unique, got {}".
                               format(ids))
        object.__setattr__(self, 'questions', questions)

    def __len__(self):
        return len(self.questions)

    def __iter__(self):
        return iter(self.questions)

    def __getitem__(self, index):
        return self.questions[index]

    @property
    def ids(self):
        return [q.id for q in self.questions]

    def to_dict(self):
        return {'questions': [q.to_dict() for q in self.questions]}

    @classmethod
    def from_dict(cls, data):
        if isinstance(data, dict):
            data = data['questions']
        return cls(tuple(data))


DEFAULT_QUESTIONNAIRE = Questionnaire((
    Question('ready_to_pick', "Is the robot ready to pick up the jar?"),
    Question('jar_picked', "Has the robot already picked up the jar?"),
    Question('jar_above_cup', "Is the jar above the cup?"),
    Question('pouring', "Is the robot pouring water into the cup?"),
))


class Domain(str, enum.Enum):
    REAL = "real"
    SIM = "simulation"


@dataclass(frozen=True)
class FluentVector(object):
    answers: tuple
    checkpoint: int
    domain: Domain
    confidences: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, 'answers',
                           tuple(bool(a) for a in self.answers))
        object.__setattr__(self, 'domain', Domain(self.domain))
        object.__setattr__(self, 'confidences',
                           tuple(float(c) for c in self.confidences))
        if self.confidences and len(self.confidences) != len(self.answers):
            raise InvalidModel("One confidence per answer is required")

    def __len__(self):
        return len(self.answers)

    def check(self, questionnaire):
        if len(self) != len(questionnaire):
            raise ShapeMismatch("Checkpoint {} has {} answers for {} "
                                "questions".format(self.checkpoint, len(self),
                                                   len(questionnaire)))
        return self

    def to_dict(self):
        result = {'answers': list(self.answers),
                  'checkpoint': self.checkpoint,
                  'domain': self.domain.value}
        if self.confidences:
            result['confidences'] = list(self.confidences)
        return result

    @classmethod
    def from_dict(cls, data):
        return cls(tuple(data['answers']), int(data['checkpoint']),
                   Domain(data['domain']), tuple(data.get('confidences', ())))


def answer_checkpoint(adapter, image_ref, q, checkpoint=1, domain=Domain.REAL):
    """ Ask every question of `q` about one image; answers keep question
        order.
    """

    answers, confidences = [], []
    for question in q:
        answer, confidence = adapter.answer(image_ref, question)
        answers.append(answer)
        confidences.append(confidence)
    logger.debug("Checkpoint %s (%s, %s): %s", checkpoint, domain,
                 image_ref, answers)
    return FluentVector(tuple(answers), checkpoint, domain, tuple(confidences))


def answer_checkpoints(adapter, image_refs, q, domain=Domain.REAL,
                       workers=None, first=1):
    """ `answer_checkpoint` for consecutive checkpoints, numbered from
        `first`. With `workers`, images are questioned concurrently; results
        are still returned in checkpoint order.
    """

    jobs = [(image_ref, first + i) for i, image_ref in enumerate(image_refs)]

    def ask(job):
        image_ref, checkpoint = job
        return answer_checkpoint(adapter, image_ref, q, checkpoint, domain)

    if workers is not None and workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as executor:
            return list(executor.map(ask, jobs))
    return [ask(job) for job in jobs]


@dataclass(frozen=True)
class ConsistencyReport(object):
    """ `agreement[q]` is the fraction of checkpoints where both domains
        gave the same answer to question `q`.
    """

    distances: tuple
    total: int
    score: float
    question_ids: tuple
    agreement: tuple

    def to_dict(self):
        return {'distances': list(self.distances),
                'total_distance': self.total,
                'score': self.score,
                'question_ids': list(self.question_ids),
                'agreement': dict(zip(self.question_ids, self.agreement))}


def _check_pairs(first, second, what):
    if len(first) != len(second):
        raise ShapeMismatch("{}: {} vs {} checkpoints".
                            format(what, len(first), len(second)))
    for a, b in zip(first, second):
        if a.checkpoint != b.checkpoint:
            raise ShapeMismatch("{}: checkpoint {} paired with {}".
                                format(what, a.checkpoint, b.checkpoint))
        if len(a) != len(b):
            raise ShapeMismatch("{}: checkpoint {} has {} vs {} answers".
                                format(what, a.checkpoint, len(a), len(b)))


def consistency_score(real, sim, question_ids=None):
    """ Agreement of two aligned fluent traces. Symmetric in its arguments.

            >>> consistency_score([FluentVector((True, False), 1, 'real')],
            ...                   [FluentVector((True, True), 1, 'simulation')])
            <<< ConsistencyReport(distances=(1,), total=1, score=0.36787...)
    """

    _check_pairs(real, sim, "Fluent traces differ")
    width = len(real[0]) if real else len(question_ids or ())
    if question_ids is None:
        question_ids = tuple("q{}".format(i + 1) for i in range(width))
    elif len(question_ids) != width:
        raise ShapeMismatch("{} question ids for {} answers".
                            format(len(question_ids), width))

    distances = tuple(sum(a != b for a, b in zip(r.answers, s.answers))
                      for r, s in zip(real, sim))
    total = sum(distances)
    agreement = tuple(
        (sum(r.answers[i] == s.answers[i] for r, s in zip(real, sim)) /
         len(real)) if real else None
        for i in range(width))
    return ConsistencyReport(distances, total, math.exp(-total),
                             tuple(question_ids), agreement)


@dataclass(frozen=True)
class Metrics(object):
    """ Binary classification metrics with "true" as the positive class.
        Metrics whose denominator is zero are `None`.
    """

    tp: int
    fp: int
    fn: int
    tn: int

    @staticmethod
    def _ratio(numerator, denominator):
        return numerator / denominator if denominator else None

    @property
    def precision(self):
        return self._ratio(self.tp, self.tp + self.fp)

    @property
    def recall(self):
        return self._ratio(self.tp, self.tp + self.fn)

    @property
    def f1(self):
        return self._ratio(2 * self.tp, 2 * self.tp + self.fp + self.fn)

    @classmethod
    def count(cls, pairs):
        tp = fp = fn = tn = 0
        for predicted, truth in pairs:
            if predicted and truth:
                tp += 1
            elif predicted:
                fp += 1
            elif truth:
                fn += 1
            else:
                tn += 1
        return cls(tp, fp, fn, tn)

    def to_dict(self):
        return {'precision': self.precision, 'recall': self.recall,
                'f1': self.f1, 'tp': self.tp, 'fp': self.fp, 'fn': self.fn,
                'tn': self.tn}


@dataclass(frozen=True)
class MetricsReport(object):
    real: Metrics
    simulation: Metrics
    overall: Metrics
    consistency: float = None

    def to_dict(self):
        return {'real': self.real.to_dict(),
                'simulation': self.simulation.to_dict(),
                'overall': self.overall.to_dict(),
                'consistency': self.consistency}

    def format_table(self):
        """ Percentages in the layout real / simulation / overall /
            consistency, with `-` for undefined values.
        """

        def pct(value):
            return "-" if value is None else "{:.1f}%".format(100 * value)

        header = ["", "Precision", "Recall", "F1"]
        rows = [[name, pct(m.precision), pct(m.recall), pct(m.f1)]
                for name, m in (("Real", self.real),
                                ("Simulation", self.simulation),
                                ("Overall", self.overall))]
        rows.append(["Consistency", pct(self.consistency), "", ""])
        widths = [max(len(row[i]) for row in [header] + rows)
                  for i in range(len(header))]
        lines = ["  ".join(cell.ljust(width)
                           for cell, width in zip(row, widths)).rstrip()
                 for row in [header] + rows]
        return "\n".join(lines) + "\n"


def _by_key(vectors):
    result = {}
    for vector in vectors:
        key = (vector.domain, vector.checkpoint)
        if key in result:
            raise ShapeMismatch("Checkpoint {} of {} appears twice".
                                format(vector.checkpoint, vector.domain.value))
        result[key] = vector
    return result


def agreement_metrics(predictions, truths):
    """ Compare predicted answers against ground truth, per domain and
        overall. Vectors are matched by (domain, checkpoint). Consistency is
        the fraction of cells where the predicted real and simulated answers
        agree (`None` without checkpoints present in both domains).
    """

    predicted, expected = _by_key(predictions), _by_key(truths)
    if set(predicted) != set(expected):
        missing = sorted(set(predicted) ^ set(expected))
        raise ShapeMismatch("Predictions and truths cover different "
                            "checkpoints: {}".format(
                                [(d.value, c) for d, c in missing]))

    cells = {Domain.REAL: [], Domain.SIM: []}
    for key in sorted(predicted):
        p, t = predicted[key], expected[key]
        if len(p) != len(t):
            raise ShapeMismatch("Checkpoint {} of {}: {} vs {} answers".
                                format(key[1], key[0].value, len(p), len(t)))
        cells[key[0]].extend(zip(p.answers, t.answers))

    agree = total = 0
    for domain, checkpoint in predicted:
        if domain is Domain.REAL and (Domain.SIM, checkpoint) in predicted:
            real = predicted[(Domain.REAL, checkpoint)]
            sim = predicted[(Domain.SIM, checkpoint)]
            if len(real) != len(sim):
                raise ShapeMismatch("Checkpoint {}: {} real vs {} simulated "
                                    "answers".format(checkpoint, len(real),
                                                     len(sim)))
            agree += sum(a == b for a, b in zip(real.answers, sim.answers))
            total += len(real)

    return MetricsReport(Metrics.count(cells[Domain.REAL]),
                         Metrics.count(cells[Domain.SIM]),
                         Metrics.count(cells[Domain.REAL] + cells[Domain.SIM]),
                         agree / total if total else None)


def expected_answers(values, questionnaire, bindings):
    """ Answers implied by fluent values. `bindings` maps question ids to a
        fluent id or to a callable taking the `{fluent_id: bool}` values.
    """

    answers = []
    for question in questionnaire:
        try:
            binding = bindings[question.id]
        except KeyError:
            raise InvalidModel("Question '{}' is not bound to a fluent".
                               format(question.id))
        if callable(binding):
            answers.append(bool(binding(values)))
        else:
            answers.append(bool(values.get(binding, False)))
    return tuple(answers)


def trace_vectors(trace, questionnaire, bindings, steps=None, first=1):
    """ Simulated fluent vectors after the given plan steps (all steps by
        default), as checkpoints numbered from `first`.
    """

    if steps is None:
        steps = range(len(trace))
    return [FluentVector(expected_answers(trace[step].after, questionnaire,
                                          bindings),
                         first + i, Domain.SIM)
            for i, step in enumerate(steps)]
