"""Exception hierarchy shared by all mahakit modules."""


class MahakitError(Exception):
    """Base class for all toolkit errors."""


class ZeroNormRow(MahakitError):
    """A feature row has (numerically) zero Euclidean norm.

    A zero feature vector almost always indicates an upstream extraction
    bug, so normalization refuses it instead of dividing by an epsilon.
    """

    def __init__(self, row_index: int):
        self.row_index = int(row_index)
        super().__init__(f"feature row {row_index} has zero norm (< 1e-30)")


class EmptyClass(MahakitError):
    def __init__(self, class_index: int):
        self.class_index = int(class_index)
        super().__init__(f"class {class_index} has no samples")


class DimensionMismatch(MahakitError):
    pass


class SingularCovariance(MahakitError):
    """Cholesky factorization failed even at the shrinkage cap."""

    def __init__(self, eps_cap: float, detail: str = ""):
        self.eps_cap = float(eps_cap)
        msg = f"covariance not factorizable at shrinkage cap eps={eps_cap:g}"
        if detail:
            msg += f" ({detail})"
        super().__init__(msg)


class FitMismatch(MahakitError):
    """A scorer was handed a fit whose normalization flag disagrees."""


class MissingHead(MahakitError):
    pass


class MissingTrain(MahakitError):
    pass


class EmptyScores(MahakitError):
    pass


class ConstantInput(MahakitError):
    """Correlation is undefined for a zero-variance input."""


class NotPSD(MahakitError):
    def __init__(self, min_eig: float, tol: float):
        self.min_eig = float(min_eig)
        super().__init__(
            f"matrix is not PSD: smallest eigenvalue {min_eig:g} below -{tol:g}"
        )


class DegenerateDirection(MahakitError):
    """Projected variance too small for QQ standardization."""


class NoMethods(MahakitError):
    pass


class ManifestError(MahakitError):
    """A bundle manifest is missing files or internally inconsistent."""


class ConfigError(MahakitError):
    pass


class EvalError(MahakitError):
    """Failure during an evaluation run, annotated with method and dataset."""

    def __init__(self, method: str, dataset: str, cause: Exception):
        self.method = method
        self.dataset = dataset
        super().__init__(f"method {method!r}, dataset {dataset!r}: {cause}")


class NpyFormatError(MahakitError):
    """Base for array-container format errors; carries file and byte offset."""

    def __init__(self, path, offset: int, message: str):
        self.path = str(path)
        self.offset = int(offset)
        super().__init__(f"{path} (byte {offset}): {message}")


class BadMagic(NpyFormatError):
    pass


class UnsupportedDtype(NpyFormatError):
    pass


class FortranOrderUnsupported(NpyFormatError):
    pass


class TruncatedPayload(NpyFormatError):
    pass


class UnsupportedShape(NpyFormatError):
    pass


class DegenerateSpectrumWarning(UserWarning):
    """Requested projection dimension exceeded the spectrum rank."""


class AllPrunedWarning(UserWarning):
    """Activation shaping removed every activation of a sample."""
