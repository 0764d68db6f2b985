"""Exception hierarchy. Each class carries the CLI exit code it maps to."""


class CertError(Exception):
    exit_code = 1


class ConfigError(CertError):
    exit_code = 2


class ProfileInvalid(CertError):
    exit_code = 3


class BudgetViolation(ProfileInvalid):
    exit_code = 4


class NoCertificate(CertError):
    exit_code = 5


class StepSizeError(CertError):
    exit_code = 6


class InvalidParameter(CertError):
    exit_code = 7


class VerificationFailed(CertError):
    exit_code = 8
