import numpy as np
import pytest

from poinfer.he import CKKSBackend, CkksParams, preset
from poinfer.nn import TrainConfig, evaluate_accuracy, mnist_cnn, mnist_sample, train


@pytest.fixture(scope="session")
def desk():
    """Exact backend at n = 2**13, scale 2**40, with a few rotation keys."""
    backend = CKKSBackend(preset("n8192-d2"), seed=11)
    keys = backend.keygen(seed=5, rotation_steps=(1, 2, 3, 5, 100))
    return backend, keys


@pytest.fixture(scope="session")
def tiny_params():
    return CkksParams.build(64, depth=2, scale_bits=20, base_bits=30, special_bits=30, check_security=False)


@pytest.fixture(scope="session")
def mnist_data():
    return mnist_sample(train_per_class=200, test_per_class=100, seed=0)


@pytest.fixture(scope="session")
def mnist_model(mnist_data):
    """MNIST architecture trained for 10 epochs on the 2,000-image subset."""
    train_set, test_set = mnist_data
    net = mnist_cnn()
    weights = train(net, train_set, TrainConfig(epochs=10, seed=0))
    return net, weights, evaluate_accuracy(net, weights, test_set)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def verdict(request, capsys):
    """Print one PASS/FAIL line for an acceptance criterion, then assert it."""

    def record(criterion, ok, detail=""):
        line = f"criterion {criterion}: {'PASS' if ok else 'FAIL'}  {detail}".rstrip()
        request.config.stash.setdefault(ACCEPTANCE, []).append(line)
        with capsys.disabled():
            print(f"\n{line}")
        assert ok, line

    return record


ACCEPTANCE = pytest.StashKey[list]()


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
