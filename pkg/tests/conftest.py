import numpy as np
import pytest

from iristraverse import _kernels
from iristraverse.decoders import LatentCode, ProceduralDecoder


@pytest.fixture(params=_kernels.available_backends())
def backend(request):
    """Run the test once per available kernel backend."""
    previous = _kernels.use_backend(request.param)
    yield request.param
    _kernels.use_backend(previous)


@pytest.fixture(scope="session")
def decoder():
    return ProceduralDecoder(120, 160, 32, seed=0)


@pytest.fixture(scope="session")
def renders(decoder):
    """Twenty seeded desk-scale renders with their codes."""
    out = []
    for s in range(20):
        z = LatentCode.sample(32, s)
        out.append((z, decoder.generate(z).detach()))
    return out


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
