class SepfitError(Exception):
    """Base error. ``module`` names the stage that failed, ``exit_code`` is what the CLI returns."""
    module = 'cli'
    exit_code = 1

    def __init__(self, message: str, *, module: str | None = None):
        super().__init__(message)
        if module is not None:
            self.module = module


class FormulaError(SepfitError):
    module = 'formula'
    exit_code = 2

    def __init__(self, message: str, offset: int | None = None):
        self.offset = offset
        if offset is not None:
            message = f'{message} (at byte {offset})'
        super().__init__(message)


class SchemaError(SepfitError):
    module = 'data'
    exit_code = 3


class DataError(SepfitError):
    module = 'data'
    exit_code = 3


class ScalingError(DataError):
    pass


class ConfigError(SepfitError):
    module = 'cli'
    exit_code = 3


class IdentifiabilityError(SepfitError):
    module = 'data'
    exit_code = 4


class MleError(SepfitError):
    module = 'mle'


class InitializationError(SepfitError):
    module = 'sampler'


class AdaptationError(SepfitError):
    module = 'sampler'


class DiagnosticsError(SepfitError):
    module = 'diagnostics'


class ScenarioError(SepfitError):
    module = 'cli'
