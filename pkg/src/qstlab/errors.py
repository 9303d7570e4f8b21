"""Exception hierarchy.

Every error carries a stable ``kind`` string and a distinct ``exit_code`` so
the command line can map failures to ``ERROR <code> <kind>: <detail>``.
"""


class QSTError(Exception):
    kind = "QSTError"
    exit_code = 1


class ZeroTrace(QSTError, ValueError):
    kind = "ZeroTrace"
    exit_code = 10


class NotPositive(QSTError, ValueError):
    kind = "NotPositive"
    exit_code = 11


class UnsupportedSize(QSTError, ValueError):
    kind = "UnsupportedSize"
    exit_code = 12


class SingularGram(QSTError, ValueError):
    kind = "SingularGram"
    exit_code = 13


class DimensionMismatch(QSTError, ValueError):
    kind = "DimensionMismatch"
    exit_code = 14


class ShapeMismatch(QSTError, ValueError):
    kind = "ShapeMismatch"
    exit_code = 15


class FormatError(QSTError, ValueError):
    kind = "FormatError"
    exit_code = 16


class ChecksumError(QSTError, ValueError):
    kind = "ChecksumError"
    exit_code = 17


class DegenerateTarget(QSTError, ValueError):
    kind = "DegenerateTarget"
    exit_code = 18


class RankDeficient(QSTError, ValueError):
    kind = "RankDeficient"
    exit_code = 19


class NonFiniteLoss(QSTError, FloatingPointError):
    kind = "NonFiniteLoss"
    exit_code = 20

    def __init__(self, message, batch_index=None, epoch=None):
        super().__init__(message)
        self.batch_index = batch_index
        self.epoch = epoch


class OutputExists(QSTError, FileExistsError):
    kind = "OutputExists"
    exit_code = 21


class ConfigError(QSTError, ValueError):
    kind = "ConfigError"
    exit_code = 22


class GradientMismatch(QSTError):
    kind = "GradientMismatch"
    exit_code = 23


class UsageError(QSTError):
    kind = "UsageError"
    exit_code = 2
