from __future__ import annotations


class BearerAuthentication(object):
    def __init__(self, api_key):
        self.api_key = api_key

    def __call__(self):
        return {'Authorization': "Bearer {}".format(self.api_key)}


class HeaderAuthentication(object):
    """ A fixed key in a custom header, as some hosted VQA endpoints expect:

            >>> HttpQaAdapter(url=..., auth=HeaderAuthentication('X-Api-Key',
            ...                                                   "KEY"))
    """

    def __init__(self, header, value):
        self.header = header
        self.value = value

    def __call__(self):
        return {self.header: self.value}
