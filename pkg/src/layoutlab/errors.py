"""Exception types shared across the toolkit."""


class LayoutLabError(Exception):
    """Base class for every library-raised error."""


class DegenerateBox(LayoutLabError):
    """Box has zero area after normalization."""


class ParseFailure(LayoutLabError):
    """Model output did not match the expected grammar."""


class NonEmptyRequired(LayoutLabError):
    """An operation received an empty constraint sequence."""


class BackendUnavailable(LayoutLabError):
    """The generation backend could not be reached."""


class ScriptExhausted(LayoutLabError):
    """A scripted backend ran out of completions."""


class FixtureMissing(LayoutLabError):
    """No recorded fixture exists for a replayed request."""


class ExhaustedRetries(LayoutLabError):
    """No parseable completion was ever obtained for a box."""


class EmptyCrop(LayoutLabError):
    """A bounding box covers zero latent cells."""


class DimensionMismatch(LayoutLabError):
    """Grids or masks do not share dimensions."""


class SchemaViolation(LayoutLabError):
    """A dataset line does not satisfy the case schema."""


class DuplicateId(LayoutLabError):
    """Two dataset cases share an id."""


class EmptyInput(LayoutLabError):
    """An aggregation received no rows."""
