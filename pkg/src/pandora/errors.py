"""Exception hierarchy shared by all pandora modules."""


class PandoraError(Exception):
    pass


# box model / converters
class InvalidBox(PandoraError, ValueError):
    pass


class EmptyName(InvalidBox):
    pass


class DuplicateColumn(InvalidBox):
    pass


class DuplicateBoxName(InvalidBox):
    pass


class UnknownTopicEntity(PandoraError, KeyError):
    pass


class ParseError(PandoraError, ValueError):
    """Input file could not be parsed; message carries file/line context."""


# memory
class DimensionMismatch(PandoraError, ValueError):
    pass


class DuplicateId(PandoraError, KeyError):
    pass


class CorruptStore(PandoraError, ValueError):
    pass


class EmptyMemory(PandoraError, ValueError):
    pass


# model services
class EmbeddingUnavailable(PandoraError, RuntimeError):
    pass


class ModelUnavailable(PandoraError, RuntimeError):
    """Transport-level failure talking to the generation service."""


class TranscriptExhausted(ModelUnavailable):
    pass


class MalformedOutput(PandoraError, ValueError):
    pass


# sandbox
class SandboxSpawnFailure(PandoraError, RuntimeError):
    pass


class ConfigError(PandoraError, ValueError):
    pass
