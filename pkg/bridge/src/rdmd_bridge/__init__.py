"""Out-of-process denoiser server for the framed tensor protocol."""

from .model import ModelHandle, TinyUNet, create_checkpoint, load_checkpoint
from .server import (
    CheckpointBackend,
    ScheduleGuard,
    StubWienerBackend,
    handle_connection,
    serve_stdio,
    serve_tcp,
)
from .wiener import WienerStub

__version__ = "0.1.0"

__all__ = [
    "CheckpointBackend",
    "ModelHandle",
    "ScheduleGuard",
    "StubWienerBackend",
    "TinyUNet",
    "WienerStub",
    "create_checkpoint",
    "handle_connection",
    "load_checkpoint",
    "serve_stdio",
    "serve_tcp",
]
