import numpy as np
import pytest

from protoicl.nn import LayerParams, Network


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def single_layer_net(w_enc, b_enc, w_dec, b_dec) -> Network:
    return Network([LayerParams(np.atleast_2d(w_enc), np.atleast_1d(b_enc))],
                   [LayerParams(np.atleast_2d(w_dec), np.atleast_1d(b_dec))])


ACCEPTANCE_RESULTS: dict = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_RESULTS):
        terminalreporter.write_line(ACCEPTANCE_RESULTS[key])
