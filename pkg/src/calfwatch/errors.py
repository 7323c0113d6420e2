"""Exception types raised across the package.

Each error names the contract it guards; callers catch the base class
``CalfWatchError`` when they only care that an operation failed.
"""


class CalfWatchError(Exception):
    pass


# --- sensor file decoding ---

class MalformedHeader(CalfWatchError):
    pass


class EmptyRecording(CalfWatchError):
    pass


class UnsupportedMode(CalfWatchError):
    pass


class BadHeader(CalfWatchError):
    pass


class BadRow(CalfWatchError):
    def __init__(self, line_number, message=""):
        self.line_number = line_number
        super().__init__(f"line {line_number}: {message}" if message else f"line {line_number}")


class RangeExceeded(CalfWatchError):
    pass


class TooShort(CalfWatchError):
    pass


# --- kernels / learners ---

class BadConfig(CalfWatchError):
    pass


class NoValidPositions(CalfWatchError):
    pass


class ShapeMismatch(CalfWatchError):
    pass


class DegenerateLabels(CalfWatchError):
    pass


class SingularInput(CalfWatchError):
    pass


# --- model artifact container ---

class BadMagic(CalfWatchError):
    pass


class VersionUnsupported(CalfWatchError):
    pass


class Truncated(CalfWatchError):
    pass


# --- evaluation ---

class TooFewGroups(CalfWatchError):
    pass


class UnknownLabel(CalfWatchError):
    pass


class EmptyClassRow(CalfWatchError):
    pass


# --- behaviour metrics ---

class BadRange(CalfWatchError):
    pass


# --- synthetic data ---

class BadProfile(CalfWatchError):
    pass


# --- service ---

class ValidationFailed(CalfWatchError):
    pass


class UnknownCalf(CalfWatchError):
    pass


class ParseFailed(CalfWatchError):
    pass


class ModelMissing(CalfWatchError):
    pass


class RecordingMissing(CalfWatchError):
    pass


class NoData(CalfWatchError):
    pass
