from __future__ import annotations

from typing import Any

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_CONVERGENCE = 3
EXIT_ORACLE = 4


class HelixTorqueError(Exception):
    exit_code: int = 1


class ConfigError(HelixTorqueError):
    exit_code = EXIT_CONFIG


class DegenerateInputError(HelixTorqueError, ValueError):
    """Static mode with no in-plane wavevector (zeta = k_rho = 0)."""


class DegeneracyError(HelixTorqueError, ValueError):
    """Isotropic layer handed to the birefringent mode basis."""


class InversionDomainError(HelixTorqueError, ValueError):
    pass


class SingularDenominatorError(HelixTorqueError, ArithmeticError):
    pass


class NonPositiveDeterminantError(HelixTorqueError, ArithmeticError):
    pass


class AliasingError(HelixTorqueError, ValueError):
    pass


class ConvergenceError(HelixTorqueError):
    exit_code = EXIT_CONVERGENCE

    def __init__(self, message: str, *, diagnostics: dict[str, Any]) -> None:
        super().__init__(message)
        self.diagnostics = diagnostics


class OracleCheckError(HelixTorqueError):
    exit_code = EXIT_ORACLE


class TorqueCheckError(HelixTorqueError, ArithmeticError):
    """Spectral torque disagrees with the finite-difference check."""
