"""Exception types shared across the package."""


class ConfigurationError(ValueError):
    """Invalid setup: singular design matrix, bad resample count, bad config."""


class EmptyWindowError(ValueError):
    """A time window holds no counts to normalize by."""


class MissingSettingsError(ValueError):
    """Some of the projection settings needed for reconstruction are absent."""

    def __init__(self, missing):
        self.missing = sorted(missing)
        super().__init__(f"missing projection settings: {self.missing}")
