import re

import numpy as np
import pytest

import motionmix as mm
from motionmix import rng as mrng


@pytest.fixture(scope="session")
def small_corpus():
    return mm.generate_corpus(4, 30, 12, 3, seed=11)


@pytest.fixture(scope="session")
def eval_corpus():
    """Bigger than small_corpus: enough samples per class for the feature
    extractor to clear its held-out accuracy bar."""
    return mm.generate_corpus(4, 80, 16, 3, seed=13)


@pytest.fixture(scope="session")
def small_sched():
    return mm.default_schedule(50)


@pytest.fixture(scope="session")
def small_mixed(small_corpus, small_sched):
    return mm.prepare_mixed(small_corpus, small_sched, 5, 15, 0.5, seed=11)


@pytest.fixture(scope="session")
def smoke_model(small_mixed, small_sched):
    """A briefly trained model: enough for behavioral tests, not quality."""
    tcfg = mm.TrainConfig(t_star=15, steps=400, batch_size=32, lr=2e-3, seed=7)
    mcfg = mm.DenoiserConfig(frames=12, dim=3, num_classes=4, hidden_width=32,
                             num_blocks=1, time_embed_dim=16, t_max=50)
    params, log = mm.train(tcfg, small_mixed, small_sched, mcfg)
    return params, log


@pytest.fixture()
def gen(request):
    return np.random.default_rng(mrng.derive_seed(1234, hash(request.node.name) % 2**31))


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """One pass/fail line per acceptance criterion."""
    lines = {}
    for outcome in ("passed", "failed", "error"):
        for rep in terminalreporter.stats.get(outcome, []):
            nodeid = getattr(rep, "nodeid", "")
            if "test_acceptance" not in nodeid:
                continue
            m = re.search(r"test_criterion_(\d+)_?(\w*)", nodeid)
            if not m:
                continue
            num = int(m.group(1))
            name = m.group(2).replace("_", " ") or f"criterion {num}"
            status = "PASS" if outcome == "passed" else "FAIL"
            lines[num] = f"  [{status}] criterion {num:2d}: {name}"
    if lines:
        terminalreporter.write_sep("=", "acceptance criteria")
        for num in sorted(lines):
            terminalreporter.write_line(lines[num])
