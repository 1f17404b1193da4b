"""Exception hierarchy. Everything derives from ValueError so callers can catch broadly."""


class ApmError(ValueError):
    pass


class InvalidInputError(ApmError):
    """Non-finite or otherwise unusable tensor input."""


class ParameterError(ApmError):
    """A scalar parameter is outside its allowed range."""


class ShapeError(ApmError):
    pass


class ParseError(ApmError):
    """Malformed event record or container file."""


class ConfigError(ApmError):
    def __init__(self, key: str, message: str):
        self.key = key
        super().__init__(f"{key}: {message}")
