import pytest

from ginet.gradcheck import TOL, check_names, run_suite

FAST = [n for n in check_names() if not n.startswith("model_")]


def test_names_unique():
    names = check_names()
    assert len(names) == len(set(names)) == 23


@pytest.mark.parametrize("name", FAST)
def test_check_passes(name):
    (seed, rep), = run_suite(seeds=(7,), only={name})
    assert rep.passed(TOL), str(rep)
    assert rep.n_coords > rep.n_kinks


@pytest.mark.parametrize("name", ["project", "gi_unit", "pixel_cross_entropy"])
def test_fault_detected(name):
    (_, rep), = run_suite(seeds=(0,), fault=name, only={name})
    assert not rep.passed(TOL)
