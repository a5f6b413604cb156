import pytest

from stutterkit import kernels


@pytest.fixture(scope="session", autouse=True)
def warm_kernels():
    """Compile the jitted kernels once so per-test timings stay meaningful."""
    kernels.warm_up()
