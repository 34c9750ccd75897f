import os

os.environ.setdefault("NUMBA_THREADING_LAYER", "workqueue")

import numpy as np
import pytest

from nordvlas.initial_data import DataParams
from nordvlas.io import parse_config

# Filled by test_acceptance; printed at the end of the session.
ACCEPTANCE = {}

SMALL_INI = """
[grid]
cells_per_axis = 32
[time]
t_end = {t_end}
[sampling]
nx_per_axis = 8
np_per_axis = 8
[data]
A_f = {A_f}
A_phi = 0.1
A_pi = 0.1
[history]
history_stride = 1
history_t_max = {t_hist}
"""


def small_config(t_end=0.6, A_f=4.6405, t_hist=None):
    return parse_config(SMALL_INI.format(t_end=t_end, A_f=A_f, t_hist=t_hist if t_hist is not None else t_end))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def data():
    return DataParams(A_f=4.6405, A_phi=0.1, A_pi=0.1)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[key]
        terminalreporter.write_line(f"criterion {key}: {'PASS' if ok else 'FAIL'}  {detail}")
