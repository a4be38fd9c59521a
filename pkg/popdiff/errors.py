class PopdiffError(Exception):
    """❌ Базовая ошибка пакета."""

    exit_code = 1


class InvalidModulus(PopdiffError):
    pass


class DimensionMismatch(PopdiffError):
    pass


class Singular(PopdiffError):
    pass


class BothZero(PopdiffError):
    pass


class NotContained(PopdiffError):
    pass


class TooLarge(PopdiffError):
    """⛔ Перебор превышает guard_limit."""


GuardExceeded = TooLarge


class NotSymmetric(PopdiffError):
    pass


class NotAutomorphism(PopdiffError):
    pass


class NotMeasurable(PopdiffError):
    pass


class SpectralFail(PopdiffError):
    """⚠️ Спектральное условие не выполнено (предсказание ненадёжно)."""


class DependentDirections(PopdiffError):
    pass


class NonConvergent(PopdiffError):
    pass


class NoPrimeInWindow(PopdiffError):
    pass


class BadMagic(PopdiffError):
    pass


class VersionMismatch(PopdiffError):
    pass


class CorruptLength(PopdiffError):
    pass


class UsageError(PopdiffError):
    pass


class ConfigError(PopdiffError):
    pass


class InvariantViolation(PopdiffError):
    """🚨 Математическая проверка не прошла."""

    exit_code = 2
