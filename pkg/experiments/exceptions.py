class ManifestError(ValueError):
    """A dataset manifest is malformed or refers to clips that do not exist."""


class MissingClipError(ManifestError):
    pass


class UnknownDeviceError(ManifestError):
    pass


class ConfigConflictError(ValueError):
    """Individually valid settings that cannot be combined."""


class MatrixSpecError(ValueError):
    pass


class UnknownPresetError(MatrixSpecError):
    pass


class MissingImportError(MatrixSpecError):
    pass
