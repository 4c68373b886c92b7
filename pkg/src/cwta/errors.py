"""Exception hierarchy.

Two families matter to the CLI: ``ConfigError`` (bad usage or input that
cannot be parsed, exit code 2) and ``DataQualityError`` (well-formed input
describing an impossible clinical course, exit code 3).
"""


class CwtaError(Exception):
    pass


class ConfigError(CwtaError, ValueError):
    pass


class DataQualityError(CwtaError, ValueError):
    pass


# matrices / trajectory
class ScoreOutOfRange(ConfigError):
    pass


class NonMonotoneTime(DataQualityError):
    pass


class ChangeAfterAbsorption(DataQualityError):
    pass


class ChangeAfterCensor(DataQualityError):
    pass


class IrreversibleTierViolation(DataQualityError):
    pass


class TimeOutOfRange(CwtaError, ValueError):
    pass


# stats
class FewerThanTwoGroups(ConfigError):
    pass


class EmptyGroup(ConfigError):
    pass


# sim
class InvalidConfig(ConfigError):
    pass


class UnknownCase(ConfigError):
    pass


class CalibrationFailed(CwtaError, RuntimeError):
    pass


# power
class TargetNotBracketed(CwtaError, ValueError):
    pass


# ingest
class MalformedRow(ConfigError):
    def __init__(self, line: int, msg: str):
        super().__init__(f"line {line}: {msg}")
        self.line = line


class DuplicatePatientDay(MalformedRow):
    pass


class GradeOutOfRange(MalformedRow):
    pass


class UnknownRecistCode(MalformedRow):
    pass


class MissingBaseline(DataQualityError):
    pass


class GapFound(DataQualityError):
    pass


class RecistRegressionAfterPD(IrreversibleTierViolation):
    pass


class UnknownCohort(ConfigError):
    pass
