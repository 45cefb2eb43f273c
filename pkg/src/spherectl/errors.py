class ConfigError(ValueError):
    """Invalid parameters or configuration; carries the offending field name."""

    def __init__(self, field, message):
        super().__init__(f"{field}: {message}")
        self.field = field


class IntegrationError(RuntimeError):
    """A forward or backward solve left the admissible region or produced non-finite values."""

    def __init__(self, message, step=None):
        if step is not None:
            message = f"{message} (step {step})"
        super().__init__(message)
        self.step = step
