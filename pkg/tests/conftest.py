import numpy as np
import pytest

from sentrycam import kernels


@pytest.fixture(scope="session", autouse=True)
def warm_kernels():
    # JIT-compile the numba kernels once so timed tests measure the work,
    # not compilation
    kernels.warmup()


@pytest.fixture(params=["numba", "numpy"])
def backend(request):
    """Run a test under both kernel backends."""
    try:
        previous = kernels.set_backend(request.param)
    except RuntimeError:
        pytest.skip(f"backend {request.param} unavailable")
    yield request.param
    kernels.set_backend(previous)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
