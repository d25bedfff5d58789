EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_STORE = 3


class CueBallError(Exception):
    """Base class for every error raised by the memory, its data and its store"""

    exit_code = EXIT_DATA


# Dataset and pattern errors

class DataError(CueBallError):
    exit_code = EXIT_DATA


class BadMagic(DataError):
    def __init__(self, magic, expected):
        super().__init__(f"bad IDX magic 0x{magic:08x} (expected 0x{expected:08x})")
        self.magic = magic
        self.expected = expected


class Truncated(DataError):
    def __init__(self, needed, available):
        super().__init__(f"payload truncated: need {needed} bytes, have {available}")
        self.needed = needed
        self.available = available


class ZeroImage(DataError):
    def __init__(self):
        super().__init__("image has no nonzero pixel, normalization is undefined")


class NotNormalized(DataError):
    def __init__(self, norm_sq, tolerance):
        super().__init__(f"pattern is not normalized: sum of squares {norm_sq!r} (tolerance {tolerance:g})")
        self.norm_sq = norm_sq


class SizeMismatch(DataError):
    def __init__(self, expected, actual):
        super().__init__(f"size mismatch: expected {expected} values, got {actual}")
        self.expected = expected
        self.actual = actual


class DatasetMissing(DataError):
    def __init__(self, path):
        super().__init__(f"image file not found: {path}")
        self.path = path


class TrailingGarbage(UserWarning):
    """Payload is longer than the header promises; the extra bytes are ignored"""


# Cue neuron errors

class CueError(CueBallError):
    exit_code = EXIT_DATA


class AlreadyLearned(CueError):
    def __init__(self, cue_id):
        super().__init__(f"cue {cue_id} already holds a memory")
        self.cue_id = cue_id


class IndexOutOfRange(CueError, IndexError):
    def __init__(self, index, size, what="cue"):
        super().__init__(f"{what} index {index} out of range [0, {size})")
        self.index = index
        self.size = size


class InvalidParams(CueError, ValueError):
    pass


# Store file errors

class StoreError(CueBallError):
    exit_code = EXIT_STORE


class StoreMissing(StoreError):
    def __init__(self, path):
        super().__init__(f"store file not found: {path}")
        self.path = path


class BadChecksum(StoreError):
    def __init__(self, stored, computed):
        super().__init__(f"store checksum mismatch: header 0x{stored:08x}, body 0x{computed:08x}")


class VersionMismatch(StoreError):
    def __init__(self, version, supported):
        super().__init__(f"store format version {version} is not supported (this build reads {supported})")
        self.version = version


class StoreTruncated(StoreError):
    pass


class DuplicateCue(StoreError):
    def __init__(self, cue_id):
        super().__init__(f"cue {cue_id} is already stored in the file")
        self.cue_id = cue_id


class IoFailure(StoreError):
    pass
