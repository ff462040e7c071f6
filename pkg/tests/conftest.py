import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from creditpipe.synthgen import GeneratorSpec, generate  # noqa: E402


@pytest.fixture(scope="session")
def synth_default():
    """Generator defaults: (frame, ground truth, spec)."""
    spec = GeneratorSpec()
    frame, truth = generate(spec)
    return frame, truth, spec


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(results):
        terminalreporter.write_line(results[n])
