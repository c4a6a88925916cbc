"""Exception hierarchy.

Every error carries a stable ``code`` string; the command-line front end
prints it so scripts can match on it.
"""


class CellHomError(Exception):
    code = "error"


class NotSymmetricError(CellHomError, ValueError):
    code = "not-symmetric"


class NotUnimodularError(CellHomError, ValueError):
    code = "not-unimodular"


class DimensionMismatchError(CellHomError, ValueError):
    code = "dimension-mismatch"


class NonUnitAxisError(CellHomError, ValueError):
    code = "non-unit-axis"


class ZeroTensorError(CellHomError, ValueError):
    code = "zero-tensor"


class SingularLatticeError(CellHomError, ValueError):
    code = "singular-lattice"


class UnknownMaterialError(CellHomError, KeyError):
    code = "unknown-material"

    def __str__(self):
        return str(self.args[0]) if self.args else ""


class InvalidCellError(CellHomError, ValueError):
    code = "invalid-cell"


class CellFormatError(CellHomError, ValueError):
    code = "cell-format"


class BadMagicError(CellFormatError):
    code = "bad-magic"


class MalformedHeaderError(CellFormatError):
    code = "malformed-header"


class TruncatedPayloadError(CellFormatError):
    code = "truncated-payload"


class IndexOutOfRangeError(CellFormatError):
    code = "index-out-of-range"


class UnknownExampleError(CellHomError, ValueError):
    code = "unknown-example"


class IncompatibleResolutionError(CellHomError, ValueError):
    code = "incompatible-resolution"


class GridIncompatibleError(CellHomError, ValueError):
    """The transformation does not map voxel centers onto voxel centers."""

    code = "grid-incompatible"

    def __init__(self, message, voxel=None, mismatch=None):
        super().__init__(message)
        self.voxel = voxel
        self.mismatch = mismatch


class NonCoerciveError(CellHomError, ValueError):
    code = "non-coercive"

    def __init__(self, message, material=None, margin=None):
        super().__init__(message)
        self.material = material
        self.margin = margin


class NotPositiveDefiniteError(CellHomError, ValueError):
    code = "not-positive-definite"


class ConvergenceError(CellHomError, RuntimeError):
    code = "no-convergence"

    def __init__(self, message, residual=None, iterations=None):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations
