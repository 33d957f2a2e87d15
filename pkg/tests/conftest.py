"""Shared fixtures (small on-disk datasets) and the acceptance summary hook."""

import re

import pytest

from gfi import datagen, sim

DESK_V_SHAPE = (1, 32, 32)
DESK_P_SHAPE = (3, 250, 32)


def _build(tmp_path_factory, family, seed, n_train, n_test, label):
    spec = datagen.family_spec(family, "A", seed=seed)
    out = tmp_path_factory.mktemp(label)
    return datagen.build_dataset(spec, n_train, n_test,
                                 sim.desk_sim_config(), out)


@pytest.fixture(scope="session")
def ds_small(tmp_path_factory):
    """6 train / 2 test flat-A samples; the workhorse for unit tests."""
    return _build(tmp_path_factory, "flat", 7, 6, 2, "ds_small")


@pytest.fixture(scope="session")
def ds_curve(tmp_path_factory):
    return _build(tmp_path_factory, "curve", 1, 4, 2, "ds_curve")


@pytest.fixture(scope="session")
def ds_overfit(tmp_path_factory):
    """4 train / 1 test flat-A samples for the overfit run."""
    return _build(tmp_path_factory, "flat", 11, 4, 1, "ds_overfit")


@pytest.fixture(scope="session")
def ds_xnet(tmp_path_factory):
    """64 train / 4 test flat-A samples for the joint-training runs."""
    return _build(tmp_path_factory, "flat", 21, 64, 4, "ds_xnet")


# ---- acceptance criterion reporting -------------------------------------

_CRITERIA = {}


def note_criterion(number, slug, detail=""):
    """Record a passed criterion for the end-of-run summary."""
    _CRITERIA[number] = (slug, detail)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    failed = {}
    for rep in terminalreporter.stats.get("failed", []):
        m = re.search(r"test_criterion_(\d+)_(\w+)", rep.nodeid)
        if m:
            failed[int(m.group(1))] = m.group(2)
    if not _CRITERIA and not failed:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for n in sorted(set(_CRITERIA) | set(failed)):
        if n in _CRITERIA:
            slug, detail = _CRITERIA[n]
            line = f"criterion {n:2d} [{slug}]: PASS"
            if detail:
                line += f"  ({detail})"
        else:
            line = f"criterion {n:2d} [{failed[n]}]: FAIL"
        terminalreporter.write_line(line)
