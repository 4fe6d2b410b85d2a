"""Exception hierarchy shared by every stage of the codec."""


class CodecError(Exception):
    """Base class; ``exit_code`` is what the CLI returns for it."""

    exit_code = 10


class DimensionMismatch(CodecError, ValueError):
    exit_code = 11


class IndexOutOfRange(CodecError, ValueError):
    exit_code = 12


class DegenerateFace(CodecError, ValueError):
    exit_code = 13


class InvalidSequence(CodecError, ValueError):
    exit_code = 14


class ConvergenceFailure(CodecError, ArithmeticError):
    exit_code = 20


class RankDeficiency(CodecError, ArithmeticError):
    exit_code = 21

    def __init__(self, message, block=None):
        super().__init__(message)
        self.block = block


class SingularSystem(CodecError, ArithmeticError):
    exit_code = 22


class InvalidBits(CodecError, ValueError):
    exit_code = 30


class InvalidCount(CodecError, ValueError):
    exit_code = 31


class InvalidConfig(CodecError, ValueError):
    exit_code = 32


class BlockSizeError(InvalidConfig):
    exit_code = 33


class CorruptPayload(CodecError, ValueError):
    exit_code = 40


class CorruptStream(CodecError, ValueError):
    exit_code = 41


class VersionMismatch(CorruptStream):
    exit_code = 42


class ParseError(CodecError, ValueError):
    exit_code = 50

    def __init__(self, message, path=None, line=None):
        where = ""
        if path is not None:
            where = f"{path}:{line}: " if line is not None else f"{path}: "
        super().__init__(where + message)
        self.path = path
        self.line = line


class ConnectivityMismatch(CodecError, ValueError):
    exit_code = 51

    def __init__(self, message, frame=None):
        super().__init__(message)
        self.frame = frame


class VertexCountMismatch(ConnectivityMismatch):
    exit_code = 52


class SignMisalignment(UserWarning):
    """A dictionary difference column looked like a missed sign flip."""
