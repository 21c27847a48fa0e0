"""Exception types raised by the toolkit.

Everything inherits from :class:`EvmxError` so callers (and the CLI) can
distinguish validation failures from genuine bugs.
"""


class EvmxError(Exception):
    """Base class for all toolkit errors."""


# --- event stream parsing / validation ---

class BadMagic(EvmxError):
    """File or blob does not start with the expected magic bytes."""


class TruncatedRecord(EvmxError):
    """Binary payload is shorter (or longer) than its header declares."""


class OutOfBoundsEvent(EvmxError):
    """Event coordinates exceed the declared sensor geometry."""


class NonMonotonicTimestamp(EvmxError):
    """Event timestamps decrease somewhere in the stream."""


class InvalidPolarity(EvmxError):
    """Event polarity is not -1 or +1."""


class MalformedLine(EvmxError):
    """A text line (CSV, manifest) could not be parsed."""

    def __init__(self, line_no: int, message: str):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


class InvalidWindow(EvmxError):
    """Time window with t_start >= t_end."""


class EmptyStream(EvmxError):
    """Operation requires at least one event."""


# --- representation ---

class BoxOutOfBounds(EvmxError):
    """Crop box does not lie inside the frame geometry."""


class ShapeMismatch(EvmxError):
    """Array shapes do not agree with the operation's contract."""


# --- dataset / manifests ---

class UnknownAU(EvmxError):
    """AU number is not part of the 21-class taxonomy."""


class MissingFile(EvmxError):
    """A path referenced by a manifest does not exist."""


class MalformedManifest(EvmxError):
    """Manifest line violates the record format."""


class TooFewSubjects(EvmxError):
    """Leave-one-subject-out needs at least two subjects."""


class EmptyDataset(EvmxError):
    """Training or evaluation received no clips."""


class InvalidSpec(EvmxError):
    """A configuration (synthetic data, network, training) is inconsistent."""


# --- metrics ---

class ZeroVariance(EvmxError):
    """Normalized correlation is undefined for a constant image."""


class ImageTooSmall(EvmxError):
    """Image is smaller than the local SSIM window."""


class EmptySet(EvmxError):
    """Metric report requires at least one image pair."""


# --- models ---

class NonFiniteActivation(EvmxError):
    """A network produced NaN or infinite activations."""


class NoRecordedForward(EvmxError):
    """Gradient extraction was requested without a recorded forward pass."""
