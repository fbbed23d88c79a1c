"""Exception hierarchy shared by every module.

Each error carries a stable ``code`` (its class name) and the exit status the
command-line front end maps it to.
"""

from __future__ import annotations


class LoadIdError(Exception):
    exit_status = 3

    @property
    def code(self) -> str:
        return type(self).__name__


class ConfigError(LoadIdError):
    exit_status = 2


class MalformedFile(LoadIdError):
    pass


class NonUniformSampling(LoadIdError):
    pass


class EmptyFile(LoadIdError):
    pass


class IoFailure(LoadIdError):
    pass


class InvalidWaveform(LoadIdError):
    pass


class SignalTooShort(LoadIdError):
    pass


class InvalidParams(LoadIdError):
    pass


class InvalidCutoff(LoadIdError):
    exit_status = 2


class InsufficientTaps(LoadIdError):
    exit_status = 2


class SingularDesign(LoadIdError):
    exit_status = 4


class StackMismatch(LoadIdError):
    exit_status = 4


class NoValidSamples(LoadIdError):
    exit_status = 4


class StiffnessWarning(UserWarning):
    """Integration step is too coarse for the circuit's fastest time constant."""
