""" Visual question answering backends behind one small interface.

    Adapters answer a yes/no `Question` about an image reference and return
    `(answer, confidence)`. Implementations register themselves by name:

        >>> @register
        ... class MyAdapter(QaAdapter):
        ...     NAME = "mine"
        ...     def answer(self, image_ref, question):
        ...         return True, 1.0

        >>> new("mine")
        <<< <MyAdapter>
"""

from __future__ import annotations

import logging

import requests

from .auth import BearerAuthentication
from .exceptions import AdapterUnavailable, InvalidInput, MissingFixture
from .files import load_json
from .utils import is_dict

logger = logging.getLogger(__name__)

registry = {}


def register(klass):
    if klass.NAME is not None:
        registry[klass.NAME] = klass
    return klass


def new(name, **kwargs):
    try:
        klass = registry[name]
    except KeyError:
        raise AdapterUnavailable("Unknown QA adapter '{}'; available: {}".
                                 format(name, sorted(registry)))
    return klass(**kwargs)


class QaAdapter(object):
    NAME = None

    def answer(self, image_ref, question):
        raise NotImplementedError()

    def __repr__(self):
        return "<{}>".format(self.__class__.__name__)


@register
class FixtureAdapter(QaAdapter):
    """ Replays recorded answers. Fixtures map image references to
        `{question_id: answer}`, where an answer is a boolean or
        `{"answer": bool, "confidence": float}`. Question texts are accepted
        as keys too.
    """

    NAME = "fixture"

    def __init__(self, fixtures=None, path=None):
        if path is not None:
            fixtures = load_json(path)
        if not is_dict(fixtures):
            raise InvalidInput("Fixtures must map image references to "
                               "answers", None if path is None else str(path))
        self.fixtures = dict(fixtures)

    def answer(self, image_ref, question):
        try:
            answers = self.fixtures[image_ref]
        except KeyError:
            raise MissingFixture("No recorded answers for '{}'".
                                 format(image_ref), image_ref)
        for key in (question.id, question.text):
            if key in answers:
                value = answers[key]
                break
        else:
            raise MissingFixture("No recorded answer to '{}' for '{}'".
                                 format(question.id, image_ref), image_ref)

        if is_dict(value):
            return bool(value['answer']), float(value.get('confidence', 1.0))
        return bool(value), 1.0


@register
class HttpQaAdapter(QaAdapter):
    """ A remote VQA service.

        - url: endpoint receiving `POST {"image", "question", "question_id"}`
          and answering `{"answer": bool, "confidence": float}`
        - auth: either a callable returning headers to merge into every
          request or a string, sent as `Authorization: Bearer <auth>`

            >>> adapter = HttpQaAdapter(url="https://vqa.example.com/answer",
            ...                         auth="KEY")
            >>> adapter.answer("frames/real_1.png", DEFAULT_QUESTIONNAIRE[0])
            <<< (True, 0.93)
    """

    NAME = "http"

    def __init__(self, **kwargs):
        self.url = None
        self.headers = {}
        self.timeout = 30
        self.make_auth_headers = dict
        self.setup(**kwargs)

    def setup(self, url=None, auth=None, headers=None, timeout=None):
        if url is not None:
            self.url = url

        if auth is not None:
            if callable(auth):
                self.make_auth_headers = auth
            else:
                self.make_auth_headers = BearerAuthentication(auth)

        if headers is not None:
            self.headers = headers

        if timeout is not None:
            self.timeout = timeout

    def answer(self, image_ref, question):
        if self.url is None:
            raise AdapterUnavailable("HTTP QA adapter has no url configured")

        headers = dict(self.headers)
        headers.update(self.make_auth_headers())
        payload = {'image': image_ref, 'question': question.text,
                   'question_id': question.id}
        try:
            response = requests.post(self.url, json=payload, headers=headers,
                                     timeout=self.timeout)
        except requests.RequestException as e:
            raise AdapterUnavailable("Cannot reach {}: {}".format(self.url, e))

        if not response.ok:
            raise AdapterUnavailable("{} answered {} for '{}'".
                                     format(self.url, response.status_code,
                                            image_ref))
        try:
            body = response.json()
            answer = body['answer']
        except (ValueError, KeyError, TypeError):
            raise AdapterUnavailable("Unexpected response from {}".
                                     format(self.url))
        if not isinstance(answer, bool):
            raise AdapterUnavailable("Non-boolean answer from {}: {!r}".
                                     format(self.url, answer))
        logger.debug("%s / %s -> %s", image_ref, question.id, answer)
        return answer, float(body.get('confidence', 1.0))
