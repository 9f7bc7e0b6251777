import json
import math

import numpy as np
import pytest

from rotortree import Generator, RotorLaw, load_generator
from rotortree.experiments import (
    ExperimentConfig,
    conjecture_probe,
    leaf_growth,
    lln_at_returns,
    lln_range,
    moment_check,
    replica_seed,
    verify_identities,
    write_report,
)

pytestmark = pytest.mark.filterwarnings("ignore:first moment matrix is not primitive")

SQRT2_LIMIT = 1 - math.sqrt(2) / 2


def test_replica_seeds_are_stable_and_distinct():
    assert replica_seed(1, 0) == replica_seed(1, 0)
    seeds = {replica_seed(1, r) for r in range(100)} | {replica_seed(2, r) for r in range(100)}
    assert len(seeds) == 200


def test_lln_range_sqrt2(sqrt2):
    rep = lln_range(ExperimentConfig(sqrt2, replicas=5, steps=200_000, seed=1))
    assert rep.verdict == "pass"
    assert rep.target == pytest.approx(SQRT2_LIMIT)
    assert rep.tolerance == 0.01 and "engineering" in rep.tolerance_note
    assert len(rep.seeds) == 5 and rep.violations == 0


def test_lln_range_on_a_ray_goes_to_zero():
    rep = lln_range(ExperimentConfig(Generator(((0,),)), replicas=5, steps=10**5, seed=1))
    assert rep.target == 0.0
    assert rep.verdict == "pass"
    assert rep.tolerance == 0.02  # gamma = 1 < 1.2


def test_tolerance_override(sqrt2):
    rep = lln_range(ExperimentConfig(sqrt2, replicas=2, steps=10**4, seed=1, tolerance=1e-9))
    assert rep.tolerance == 1e-9 and rep.verdict == "fail"


@pytest.mark.parametrize("name", ["binary", "appendix_subtree"])
def test_lln_not_applicable(name):
    rep = lln_range(ExperimentConfig(load_generator(name), replicas=1, steps=100))
    assert rep.verdict == "not-applicable"


def test_lln_at_returns_sqrt2(sqrt2):
    rep = lln_at_returns(ExperimentConfig(sqrt2, replicas=10, returns=13, seed=2))
    assert rep.verdict == "pass"
    assert rep.details["first_return_ratio_not_half"] == 0
    assert min(rep.details["final_tau"]) >= 10**5
    firsts = [v for r, k, v in rep.series if k == 1]
    assert firsts == [0.5] * 10


def test_leaf_growth_sqrt2(sqrt2):
    cfg = ExperimentConfig(sqrt2, replicas=10, returns=12, seed=3, step_cap=10**8)
    rep = leaf_growth(cfg, one_generation_samples=10**4)
    assert rep.details["one_generation_pass"]
    assert rep.details["one_generation_target"] == [1.0, 2.0]
    assert rep.verdict == "pass"
    # L_0 = e_root by construction
    assert all(v == 1 for r, k, v in rep.series if k == 0)


def test_verify_identities_appendix(appendix):
    rep = verify_identities(ExperimentConfig(appendix, replicas=10, returns=3, seed=4))
    assert rep.verdict == "pass" and rep.violations == 0
    assert rep.details["returns_checked"] == 30


def test_verify_identities_null_recurrent(binary):
    rep = verify_identities(
        ExperimentConfig(binary, replicas=10, returns=20, seed=5, step_cap=10**5)
    )
    assert rep.verdict == "pass"
    assert rep.details["returns_checked"] > 10


def test_verify_identities_catches_corrupted_modulus(sqrt2):
    cfg = ExperimentConfig(sqrt2, replicas=3, returns=5, seed=6, modulus_shift=-1)
    rep = verify_identities(cfg)
    assert rep.verdict == "fail" and rep.violations > 0
    first = rep.details["first_counterexample"]
    assert first["seed"] == rep.seeds[0] and first["k"] >= 1
    assert "vertex r" in first["violation"] or "tau" in first["violation"]


def test_verify_identities_time_budget(appendix):
    rep = verify_identities(
        ExperimentConfig(appendix, replicas=50, returns=3, seed=1, time_budget=0.0)
    )
    assert rep.details["replicas_skipped_by_time_budget"] == 50
    assert rep.verdict == "fail"  # nothing was checked


def test_conjecture_probe(binary):
    rep = conjecture_probe(ExperimentConfig(binary, replicas=3, steps=10**5, seed=7))
    assert rep.verdict == "informational" and rep.target == 0.5
    assert 0.4 < rep.mean < 0.6
    crit = conjecture_probe(
        ExperimentConfig(load_generator("palindrome_critical"), replicas=2, steps=10**4)
    )
    assert crit.verdict == "informational"
    assert conjecture_probe(ExperimentConfig(load_generator("sqrt2"))).verdict == "not-applicable"


def test_moment_check_sqrt2(sqrt2):
    rep = moment_check(ExperimentConfig(sqrt2, samples=10**5, seed=8))
    assert rep.verdict == "pass"
    assert np.allclose(rep.details["mean_Y"][0], [2, 2], atol=0.05)


def test_moment_check_dead_law_is_exact(appendix):
    cfg = ExperimentConfig(appendix, law=RotorLaw.point_mass(appendix, -1), samples=1000)
    rep = moment_check(cfg)
    assert rep.verdict == "pass"
    assert rep.details["mean_Y"] == np.eye(5).tolist()


def test_parallel_matches_serial(sqrt2):
    serial = lln_range(ExperimentConfig(sqrt2, replicas=3, steps=20_000, seed=9))
    parallel = lln_range(ExperimentConfig(sqrt2, replicas=3, steps=20_000, seed=9, workers=2))
    assert serial.replica_values == parallel.replica_values
    assert serial.series == parallel.series


def test_report_files_and_reproducibility(sqrt2, tmp_path):
    cfg = ExperimentConfig(sqrt2, replicas=2, steps=10**4, seed=10, stride=1000)
    a = write_report(lln_range(cfg), tmp_path / "a")
    b = write_report(lln_range(cfg), tmp_path / "b")
    for pa, pb in zip(a, b):
        assert pa.read_bytes() == pb.read_bytes()
    rows = a[0].read_text().splitlines()
    assert rows[0] == "replica,n_or_k,value" and len(rows) == 21
    summary = dict(line.split(" = ", 1) for line in a[1].read_text().splitlines())
    assert json.loads(summary["verdict"]) in ("pass", "fail")
    assert json.loads(summary["target"]) == pytest.approx(SQRT2_LIMIT)
    assert "word.1" in json.loads(summary["config"])["generator"]
    assert json.loads(summary["seeds"]) == cfg.seeds()


@pytest.mark.parametrize(
    "name, returns, step_cap",
    [("appendix", 3, 10**7), ("sqrt2", 10, 10**7), ("binary", 20, 10**5)],
)
def test_identities_hold_over_100_seeds_at_reachable_horizons(name, returns, step_cap):
    cfg = ExperimentConfig(load_generator(name), replicas=100, returns=returns, seed=11,
                           step_cap=step_cap)
    rep = verify_identities(cfg)
    assert rep.violations == 0 and rep.verdict == "pass"
    if name != "binary":
        assert rep.details["replicas_short_of_horizon"] == 0
