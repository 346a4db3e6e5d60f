"""Exception hierarchy shared across the package.

Every failure class the CLI maps to a distinct exit code has its own
exception type; everything derives from :class:`RdmdError` so callers can
catch package failures in one clause.
"""

from __future__ import annotations


class RdmdError(Exception):
    """Base class for all errors raised by this package."""


class ParameterError(RdmdError, ValueError):
    """A scalar/config parameter is out of its documented range."""


class ShapeError(RdmdError, ValueError):
    """An array does not have the shape an operation requires."""


class DivergenceError(RdmdError, RuntimeError):
    """The solver iterate blew up or became non-finite."""

    def __init__(self, step: int, norm: float):
        self.step = step
        self.norm = norm
        super().__init__(f"iterate diverged at step t={step} (||z|| = {norm:.6g})")


class BackendError(RdmdError, RuntimeError):
    """A denoiser backend failed (transport, remote error, timeout)."""


class ProtocolError(BackendError):
    """A wire-protocol frame was malformed or unexpected."""


class ImageFormatError(RdmdError, ValueError):
    """An image file has a malformed or unsupported header."""


class UnsupportedDepthError(ImageFormatError):
    """An image file uses a bit depth other than 8 bits per sample."""
