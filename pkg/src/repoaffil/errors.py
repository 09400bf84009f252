"""Exception hierarchy shared across the pipeline.

The CLI maps these onto exit codes: configuration/usage problems exit 1,
network/service problems exit 2, store/data problems exit 3.
"""


class RepoAffilError(Exception):
    """Base class for all pipeline errors."""

    exit_code = 1


class ConfigError(RepoAffilError):
    """Malformed configuration or missing required setting."""

    exit_code = 1


class NetworkError(RepoAffilError):
    """Transport failure talking to a remote service."""

    exit_code = 2


class RateLimitError(NetworkError):
    """Remote rate limit still exhausted after the retry budget."""


class ServiceError(NetworkError):
    """Remote service answered, but unusably (5xx, bad payload shape)."""


class EmbeddingError(ServiceError):
    """Embedding service failed for one or more inputs."""

    def __init__(self, message: str, failed_repo_ids: tuple[str, ...] = ()):
        super().__init__(message)
        self.failed_repo_ids = failed_repo_ids


class ProtocolError(ServiceError):
    """Response violated the wire contract (e.g. mixed vector dimensions)."""


class FormatError(RepoAffilError):
    """A model response could not be parsed into the required format."""

    exit_code = 1

    def __init__(self, message: str, raw_response: str = ""):
        super().__init__(message)
        self.raw_response = raw_response


class StoreError(RepoAffilError):
    """Store-level failure."""

    exit_code = 3


class DataError(StoreError):
    """A record violated a store constraint; message names the key."""


class NotFoundError(StoreError):
    """Lookup referenced a key the store does not contain."""


class TrainingError(RepoAffilError):
    """Classifier training could not proceed (e.g. single-class input)."""

    exit_code = 1


class SamplingError(RepoAffilError):
    """Labeled pool cannot satisfy the requested sample; carries counts."""

    exit_code = 1


class MetricError(RepoAffilError):
    """Metric undefined for the given input (e.g. single-class ROC)."""

    exit_code = 1
