import math
import os
import subprocess

import pytest

import ipcwi


@pytest.fixture(scope="module")
def study():
    return ipcwi.simulate(m=60, seed=3)


@pytest.fixture(scope="module")
def fits(study):
    return ipcwi.fit(study)


def test_simulate_shape(study):
    assert study.num_groups == 60
    assert study.num_individuals == 600
    assert study.covariate_names == ["L1", "L2"]
    rows = study.rows()
    assert len(rows) == 600
    assert rows[0][0] == "g1"


def test_csv_round_trip(study, tmp_path):
    path = tmp_path / "d.csv"
    study.to_csv(str(path))
    back = ipcwi.read_csv(str(path))
    assert back.rows() == study.rows()
    assert ipcwi.parse_csv(study.csv_text()).rows() == study.rows()


def test_fit(fits):
    assert fits["propensity"]["converged"]
    assert fits["censoring"]["converged"]
    assert len(fits["propensity"]["theta_x"]) == 3
    assert fits["censoring"]["theta_h"] > 0


def test_mixture_identity(study, fits):
    mu = ipcwi.estimate_mu(study, fits, [(100, 0, 0.4), (100, 1, 0.4), (100, None, 0.4)])
    m0, m1, marg = (e["estimate"] for e in mu)
    assert math.isclose(marg, 0.4 * m1 + 0.6 * m0, abs_tol=1e-10)


def test_effects(study, fits):
    res = ipcwi.estimate_effects(study, fits, alphas=[0.3, 0.7], reference_alpha=0.5)
    kinds = [r["effect"] for r in res["effects"]]
    assert sorted(set(kinds)) == ["DE", "IE", "OE", "TE"]
    assert len(kinds) == 8
    for r in res["effects"]:
        assert r["se"] >= 0
        assert r["ci_low"] <= r["estimate"] <= r["ci_high"]


def test_truth_and_policy():
    truth = ipcwi.compute_truth([(100, 0, 0.5), (100, 1, 0.5)], oracle_groups=5000)
    assert 0 < truth[1] < truth[0] < 1
    assert math.isclose(ipcwi.policy_prob([1, 0, 1], 0.3), 0.3 * 0.7 * 0.3)
    assert math.isclose(ipcwi.log_policy_prob(2, 3, 0.3), math.log(0.3 * 0.7 * 0.3))


def test_replicate_small():
    table = ipcwi.replicate([(100, 0, 0.5)], reps=3, mode="known", truth=[0.36], m=30, threads=1)
    assert table["rows"][0]["n_ok"] == 3
    assert table["mode"] == "known"


def test_errors(study):
    with pytest.raises(ValueError):
        ipcwi.simulate(alpha=3)
    with pytest.raises(ValueError):
        ipcwi.policy_prob([1, 0], 1.5)
    with pytest.raises(ValueError):
        ipcwi.parse_csv("group_id,individual_id,treatment,time,event\ng,1,1,x,1\n")
    code, _, err = ipcwi.run_cli("simulate", "--set", "targets.alphas=[1.2]")
    assert code == 1 and "alpha" in err


@pytest.mark.skipif("IPCWI_CLI" not in os.environ, reason="CLI path not provided")
def test_cli_binary(tmp_path):
    out = subprocess.run([os.environ["IPCWI_CLI"], "simulate", "-o", str(tmp_path), "--set", "simulation.m=5",
                          "--set", "truth.oracle_groups=100"], capture_output=True, text=True)
    assert out.returncode == 0
    assert (tmp_path / "data.csv").exists()
