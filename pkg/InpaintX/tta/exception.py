class InpaintError(Exception):
    reason = "error"
    exit_code = 1


class ConfigError(InpaintError):
    reason = "config-error"
    exit_code = 2

    def __init__(self, violations):
        if isinstance(violations, str):
            violations = [violations]
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


class DimensionError(InpaintError):
    reason = "dimension-error"
    exit_code = 3


class ContractError(InpaintError):
    reason = "contract-error"
    exit_code = 3


class DataError(InpaintError):
    reason = "data-error"
    exit_code = 3


class NumericError(InpaintError):
    reason = "numeric-error"
    exit_code = 4
