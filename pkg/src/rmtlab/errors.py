"""Exception hierarchy shared by every rmtlab module."""


class RmtlabError(Exception):
    """Base class; the CLI maps subclasses onto exit codes."""

    exit_code = 3


class ConfigError(RmtlabError):
    exit_code = 2


class DomainError(RmtlabError, ValueError):
    pass


class BadNormalization(RmtlabError, ValueError):
    pass


class NotOneCut(RmtlabError):
    pass


class CrossCheckFailure(RmtlabError):
    pass


class EigensolveFailure(RmtlabError):
    pass


class ChainDiverged(RmtlabError):
    pass


class ReplicaError(RmtlabError):
    """Wraps a sampler failure with the index of the replica that raised it."""

    def __init__(self, index, cause):
        super().__init__(f"replica {index}: {cause}")
        self.index = index
        self.cause = cause


class NormalizationUnavailable(RmtlabError):
    pass


class InsufficientReplicas(RmtlabError):
    pass


class DiagonalError(RmtlabError, ValueError):
    pass


class PrecisionExhausted(RmtlabError):
    def __init__(self, message, condition_digits=None):
        super().__init__(message)
        self.condition_digits = condition_digits


class EdgeTooClose(RmtlabError, ValueError):
    pass


class ShootingFailed(RmtlabError):
    pass


class BranchAmbiguity(RmtlabError):
    pass
