import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

STUB_PATH = Path(__file__).parent / "stubs" / "echo_denoiser.py"


@pytest.fixture
def echo_backend_spec() -> str:
    return f"extern:{sys.executable} {STUB_PATH}"
