"""Exception hierarchy shared across the toolkit.

The CLI maps these onto exit codes: usage problems exit 1, DataError exits 2,
ProviderError exits 3.
"""


class FfciError(Exception):
    """Base class for all toolkit errors."""


class DataError(FfciError):
    """Malformed or inconsistent input data (datasets, annotations, tables)."""


class ZeroVarianceError(FfciError):
    """Correlation requested on a constant sequence; the value is undefined."""


class ProviderError(FfciError):
    """Base class for model-provider failures."""


class UnknownModelError(ProviderError):
    """Requested model id is not in the served-model registry."""


class LayerOutOfRangeError(ProviderError):
    """Requested layer index exceeds the model's declared layer count."""


class CacheMissError(ProviderError):
    """Cache-only mode was asked for a request that has no stored entry."""


class ProviderUnavailableError(ProviderError):
    """The provider endpoint could not be reached."""


class ProtocolError(ProviderError):
    """The provider returned a malformed or out-of-contract response."""
