"""Exception hierarchy shared by all sase modules."""


class SaseError(Exception):
    """Base class for every error raised by sase."""


class ContractViolation(SaseError, ValueError):
    """A caller broke an operation's precondition."""


class ConfigurationError(SaseError, ValueError):
    """Engine, schema or similarity configuration cannot be used."""


class FingerprintError(SaseError):
    """A knowledge base was paired with a schema it was not built for."""


class KBFormatError(SaseError):
    """A knowledge base document is malformed."""


class KBVersionError(KBFormatError):
    """A knowledge base document carries an unsupported version."""


class CaseNotFound(SaseError, KeyError):
    pass


class UnsupportedAttribute(SaseError, TypeError):
    """Uncertainty was requested for a categorical attribute."""


class InsufficientData(SaseError, ValueError):
    pass


class ScenarioError(SaseError):
    """A scenario document failed validation.

    ``violations`` lists every problem found, not only the first.
    """

    def __init__(self, violations):
        if isinstance(violations, str):
            violations = [violations]
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))
