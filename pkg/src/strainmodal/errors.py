"""Exception hierarchy.

Every error carries an ``exit_code`` so the command line front end can map
failures onto its stable contract (2 config/usage, 3 simulation,
4 identification or fit degeneracy).
"""


class StrainModalError(Exception):
    exit_code = 2


class ParseError(StrainModalError):
    pass


class ValidationError(StrainModalError, ValueError):
    pass


class InvalidCutoff(ValidationError):
    pass


class RecordTooShort(ValidationError):
    pass


class RankDeficientPast(StrainModalError):
    exit_code = 4


class OrderTooHigh(StrainModalError, ValueError):
    pass


class SvdFailure(StrainModalError):
    exit_code = 4


class DefectiveSystemMatrix(StrainModalError):
    exit_code = 4


class NotEnoughStableModes(StrainModalError):
    exit_code = 4


class PositionOutOfRange(ValidationError):
    pass


class RootsNotFound(StrainModalError):
    exit_code = 3


class FitDegenerate(StrainModalError):
    exit_code = 4


class InsufficientSamples(ValidationError):
    pass


class IllConditionedFit(StrainModalError):
    exit_code = 4


class DegenerateShape(StrainModalError, ValueError):
    exit_code = 4


class NyquistViolation(StrainModalError):
    exit_code = 3


class ZeroVector(StrainModalError, ValueError):
    pass


class LengthMismatch(StrainModalError, ValueError):
    pass


class DivideByZeroBaseline(StrainModalError, ZeroDivisionError):
    pass
