"""Exception hierarchy shared by all pipeline stages."""


class LogloomError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(LogloomError):
    """Invalid or inconsistent run configuration / manifest."""


class IoError(LogloomError):
    """A referenced file is missing or unreadable."""


class MalformedLine(LogloomError):
    """Raw line does not match the header format (skipped and counted, never fatal)."""


class FormatError(LogloomError):
    """A persisted artifact violates its file format contract."""


class MissingVector(LogloomError):
    """A template id required downstream has no vector."""

    def __init__(self, template_id: int):
        self.template_id = template_id
        super().__init__(f"no vector for template_id {template_id}")


class LabelError(LogloomError):
    """Label file does not align with the record stream."""


class DependencyError(LogloomError):
    """An upstream artifact is missing; names the command that produces it."""


class ContractViolation(LogloomError):
    """An input violates a documented precondition."""


class NumericalError(LogloomError):
    """Non-finite values appeared during computation."""


class TrainingDiverged(NumericalError):
    """Loss exceeded the divergence guard or became non-finite."""

    def __init__(self, epoch: int, loss: float):
        self.epoch = epoch
        self.loss = loss
        super().__init__(f"training diverged at epoch {epoch} (loss={loss})")


class EigenFailure(NumericalError):
    """Jacobi sweeps did not reach the off-diagonal tolerance."""


class DegenerateEmbedding(NumericalError):
    """All embedding rows identical; spectral clustering cannot proceed."""


class MetricUndefined(LogloomError):
    """A clustering index is undefined for this input (e.g. a single cluster)."""
