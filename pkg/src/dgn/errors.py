"""Exception types raised across the package."""


class DGNError(Exception):
    """Base class for all package errors."""


class InvalidArgument(DGNError, ValueError):
    pass


class InvalidConfig(DGNError, ValueError):
    pass


class CorruptWindowSet(DGNError, ValueError):
    pass


class OracleScaleExceeded(DGNError, RuntimeError):
    pass


class DecodeError(DGNError, ValueError):
    pass


class MissingDepth(DGNError, FileNotFoundError):
    def __init__(self, image_id, path=None):
        self.image_id = image_id
        self.path = path
        where = f" (looked for {path})" if path is not None else ""
        super().__init__(f"no depth sidecar for image {image_id!r}{where}")


class CheckpointError(DGNError, ValueError):
    pass


class TrainingDiverged(DGNError, RuntimeError):
    def __init__(self, iteration, last_checkpoint):
        self.iteration = iteration
        self.last_checkpoint = last_checkpoint
        super().__init__(
            f"non-finite loss at iteration {iteration}; last good checkpoint: {last_checkpoint}"
        )
