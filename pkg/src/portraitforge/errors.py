"""Exception hierarchy shared across the package."""


class PortraitForgeError(Exception):
    """Base class for all package errors."""


# geometry

class LengthMismatch(PortraitForgeError):
    pass


class CollinearLandmarks(PortraitForgeError):
    pass


class SingularTransform(PortraitForgeError):
    pass


class DimensionMismatch(PortraitForgeError):
    pass


class DegenerateHull(PortraitForgeError):
    pass


# adapters

class AdapterFailure(PortraitForgeError):
    pass


class DegenerateCrop(PortraitForgeError):
    pass


class NoFacesFound(PortraitForgeError):
    pass


# diffusion backend

class KeyMismatch(PortraitForgeError):
    pass


class ShapeMismatch(PortraitForgeError):
    pass


class AllZeroWeights(PortraitForgeError):
    pass


class BackendUnavailable(PortraitForgeError):
    pass


class InvalidRequest(PortraitForgeError):
    pass


# training

class TrainerFailure(PortraitForgeError):
    pass


class EmptyReport(PortraitForgeError):
    pass


class NotEnoughImages(PortraitForgeError):
    pass


class TooManyImages(PortraitForgeError):
    pass


# inference / service

class UserCountMismatch(PortraitForgeError):
    pass


class UserNotTrained(PortraitForgeError):
    pass


class TemplateNotFound(PortraitForgeError):
    pass


class UndecodableImage(PortraitForgeError):
    pass


class JobAlreadyRunning(PortraitForgeError):
    pass
