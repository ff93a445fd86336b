import numpy as np
import pytest

from usocc.network import EncodingConfig, NetworkConfig, OccupancyModel


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def small_model(seed=0, hidden_layers=2, width=4, skip_at=1, n_freq=1, bias_scale=0.1):
    cfg = NetworkConfig(hidden_layers=hidden_layers, hidden_width=width, skip_at=skip_at,
                        encoding=EncodingConfig(n_freq, True))
    m = OccupancyModel.initialize(cfg, seed)
    r = np.random.default_rng(seed + 100)
    for b in m.biases:
        b[:] = r.normal(scale=bias_scale, size=b.shape)
    return m


ACCEPTANCE = {}


def record(criterion: int, passed: bool, detail: str):
    ACCEPTANCE[criterion] = (passed, detail)
    print(f"criterion {criterion}: {'PASS' if passed else 'FAIL'}  {detail}")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        passed, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k}: {'PASS' if passed else 'FAIL'}  {detail}")
