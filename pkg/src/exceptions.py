class SpectralFusionError(Exception):
    """Base class for every error raised by the toolkit."""


class CubeValidationError(SpectralFusionError, ValueError):
    """A cube, grid or label map violates its invariants."""

    def __init__(self, report):
        self.report = list(report)
        details = "; ".join(str(v) for v in self.report)
        super().__init__(f"Invalid spectral data: {details}")


class ExtrapolationError(SpectralFusionError, ValueError):
    """A query lies outside the span of the interpolation knots."""

    def __init__(self, query: float, span: tuple, pixel: tuple | None = None):
        self.query = query
        self.span = span
        self.pixel = pixel
        message = f"Query {query:g} nm outside knot span [{span[0]:g}, {span[1]:g}]"
        if pixel is not None:
            message += f" at pixel (row={pixel[0]}, col={pixel[1]})"
        super().__init__(message)


class ArityError(SpectralFusionError, ValueError):
    """Too few knots for the requested interpolation method."""


class UnmappedClassError(SpectralFusionError, KeyError):
    def __init__(self, class_id: int):
        self.class_id = class_id
        super().__init__(f"unmapped class {class_id}")

    def __str__(self):
        return self.args[0]


class NoCommonRangeError(SpectralFusionError, ValueError):
    def __init__(self, spans: dict):
        self.spans = dict(spans)
        listed = ", ".join(f"{name}: [{lo:g}, {hi:g}]" for name, (lo, hi) in self.spans.items())
        super().__init__(f"no common spectral range ({listed})")


class ShapeMismatchError(SpectralFusionError, ValueError):
    """Arrays or models whose shapes do not line up."""


class ContainerFormatError(SpectralFusionError, ValueError):
    """Malformed container header, payload, manifest or checkpoint."""

    def __init__(self, field: str, message: str):
        self.field = field
        super().__init__(f"{field}: {message}")


class DatasetError(SpectralFusionError):
    """Failure while processing one dataset, tagged with its name."""

    def __init__(self, dataset: str, cause: Exception):
        self.dataset = dataset
        self.cause = cause
        super().__init__(f"[{dataset}] {cause}")


class PixelIndexError(SpectralFusionError, IndexError):
    def __init__(self, axis: str, index: int, size: int):
        self.axis = axis
        super().__init__(f"{axis} index {index} out of bounds for {axis} axis of size {size}")


class SpectralCoverageError(SpectralFusionError, ValueError):
    """A cube does not cover the wavelengths an index needs."""
