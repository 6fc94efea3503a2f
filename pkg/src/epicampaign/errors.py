"""Exception hierarchy shared by all solver modules."""


class EpicampaignError(Exception):
    """Base class for every error raised by this package."""


class ParameterError(EpicampaignError, ValueError):
    """A numeric argument is out of its admissible range."""


class IngestionError(EpicampaignError):
    """An edge list could not be turned into a degree distribution."""


class ParseError(IngestionError):
    def __init__(self, message, line_number=None):
        self.line_number = line_number
        if line_number is not None:
            message = f"line {line_number}: {message}"
        super().__init__(message)


class ConfigError(EpicampaignError):
    """Scenario file does not match the schema."""

    def __init__(self, message, field=None):
        self.field = field
        if field:
            message = f"{field}: {message}"
        super().__init__(message)


class ValidationError(EpicampaignError):
    """Scenario parses but violates a model invariant."""

    def __init__(self, message, field=None):
        self.field = field
        if field:
            message = f"{field}: {message}"
        super().__init__(message)


class CostModelError(EpicampaignError):
    """Cost coefficients unusable for the Hamiltonian maximization."""


class IntegrationBlowupError(EpicampaignError):
    def __init__(self, message, grid_index=None, time=None):
        self.grid_index = grid_index
        self.time = time
        if grid_index is not None:
            message = f"{message} (first bad grid point {grid_index}, t={time:.6g})"
        super().__init__(message)


class BracketError(EpicampaignError):
    """Budget cannot be met inside the multiplier bracket."""

    def __init__(self, message, r_low=None, r_high=None):
        self.r_low = r_low
        self.r_high = r_high
        super().__init__(message)


class MonotonicityError(EpicampaignError):
    """Resource used grew with the multiplier during bisection."""


class StepSizeError(EpicampaignError):
    """Simulation time step too large for the contact probability model."""
