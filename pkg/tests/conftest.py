import numpy as np
import pytest

from ecoscope import inference, memory, scene_gen


@pytest.fixture(scope="session")
def multipart_memory():
    """Finalized memory trained on 300 clean multi-part scenes."""
    images = [s.image for s in scene_gen.generate_dataset("multipart", 300, 11)]
    return memory.finalize(inference.train_memory(images))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    import sys

    module = sys.modules.get("test_acceptance")
    results = getattr(module, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(results):
        ok, detail = results[n]
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'} {detail}")
