"""Exception hierarchy."""


class DefectGasError(Exception):
    pass


class InvalidDimension(DefectGasError, ValueError):
    pass


class NotUnimodular(DefectGasError, ValueError):
    pass


class AntipodalDirection(DefectGasError, ValueError):
    pass


class InvalidOffset(DefectGasError, ValueError):
    pass


class InvalidLaunch(DefectGasError, ValueError):
    """The launch point lies strictly inside a scatterer."""


class UnboundedRegion(DefectGasError, ValueError):
    pass


class InsufficientSamples(DefectGasError, ValueError):
    pass


class GridMismatch(DefectGasError, ValueError):
    pass


class ConfigError(DefectGasError, ValueError):
    pass
