"""Exception hierarchy shared by every module."""


class StyleSmoothError(Exception):
    """Base class; ``kind`` is the machine-readable tag used by the CLI."""

    kind = "error"


class DimensionError(StyleSmoothError, ValueError):
    kind = "dimension_error"


class DomainError(StyleSmoothError, ValueError):
    kind = "domain_error"


class ContractError(StyleSmoothError, RuntimeError):
    kind = "contract_error"


class InputError(StyleSmoothError, ValueError):
    kind = "input_error"


class ConfigError(StyleSmoothError, ValueError):
    kind = "config_error"


class CapabilityError(StyleSmoothError, TypeError):
    kind = "capability_error"


class CheckpointError(StyleSmoothError, OSError):
    kind = "file_error"


class RunLockedError(StyleSmoothError, RuntimeError):
    kind = "lock_error"
