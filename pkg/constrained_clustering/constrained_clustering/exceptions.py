class ConstrainedClusteringError(Exception):
    """Base class for every error raised by this package"""


# Tensor engine


class ShapeMismatchError(ConstrainedClusteringError, ValueError):
    def __init__(self, op, left_shape, right_shape):
        self.op = op
        self.left_shape = tuple(left_shape)
        self.right_shape = tuple(right_shape)
        super().__init__(
            f"{op}: incompatible shapes {self.left_shape} and {self.right_shape}"
        )


class NonFiniteError(ConstrainedClusteringError, ArithmeticError):
    def __init__(self, op):
        self.op = op
        super().__init__(f"{op} produced a non-finite value")


class DomainError(ConstrainedClusteringError, ValueError):
    pass


class NonScalarLossError(ConstrainedClusteringError, ValueError):
    pass


class MissingGradientError(ConstrainedClusteringError):
    pass


# Network


class ArchitectureError(ConstrainedClusteringError, ValueError):
    pass


class PretrainingError(ConstrainedClusteringError):
    def __init__(self, layer, message):
        self.layer = layer
        super().__init__(f"pretraining layer {layer}: {message}")


class ModelFileError(ConstrainedClusteringError):
    pass


class CorruptHeaderError(ModelFileError):
    pass


class VersionMismatchError(ModelFileError):
    pass


class ShapeInconsistencyError(ModelFileError):
    pass


# Constraints


class ConstraintError(ConstrainedClusteringError, ValueError):
    pass


class ConstraintInconsistencyError(ConstraintError):
    def __init__(self, pair, message=None):
        self.pair = tuple(pair)
        super().__init__(
            message or f"pair {self.pair} is both must-linked and cannot-linked"
        )


class ConstraintFileError(ConstraintError):
    def __init__(self, line_number, message):
        self.line_number = line_number
        super().__init__(f"line {line_number}: {message}")


class EmptyConstraintError(ConstraintError):
    pass


class ClusterCountError(ConstrainedClusteringError, ValueError):
    pass


class UndersizedBatchWarning(UserWarning):
    pass


# Datasets


class DatasetError(ConstrainedClusteringError):
    pass


class BadMagicError(DatasetError):
    pass


class TruncatedPayloadError(DatasetError):
    pass


class CountMismatchError(DatasetError):
    pass


class ParseError(DatasetError):
    def __init__(self, row, message):
        self.row = row
        super().__init__(f"row {row}: {message}")


# Training


class ConfigError(ConstrainedClusteringError, ValueError):
    pass


class TrainingDivergedError(ConstrainedClusteringError):
    def __init__(self, epoch, batch, branch):
        self.epoch = epoch
        self.batch = batch
        self.branch = branch
        super().__init__(
            f"non-finite {branch} loss at epoch {epoch}, batch {batch}"
        )
