import math

import pytest

from stereounif.experiments import (
    ExperimentConfig,
    InfeasibleError,
    cell_keys,
    estimate_seconds,
    power_stats,
    run_cell,
    run_experiment,
    write_rows,
)
from stereounif.statistics import StatSpec

CONFIG_TEXT = """\
experiment = local-power
q = 2
q = 3
n = 40
M = 200
a = -1
a = 0
a = 1
tau = 0
tau = 2.5
ell = 2
f_id = vmf
seed = 11
"""


def small_power(**kw):
    base = dict(experiment="local-power", q=(2,), n=(30,), M=100, m=1000, tau=(0.0, 3.0), ell=(2,),
                calibration="exact", theory_m=2000, seed=3)
    base.update(kw)
    return ExperimentConfig(**base)


def small_uad(**kw):
    base = dict(experiment="uad-table", q=(2,), n=(20,), M=100, m=500, theta=(10.0, 180.0), folds=2, seed=5)
    base.update(kw)
    return ExperimentConfig(**base)


class TestConfig:
    def test_round_trip(self):
        cfg = ExperimentConfig.parse(CONFIG_TEXT)
        assert cfg.q == (2, 3) and cfg.a == (-1.0, 0.0, 1.0) and cfg.tau == (0.0, 2.5)
        assert cfg.to_text() == CONFIG_TEXT
        assert ExperimentConfig.parse(cfg.to_text()) == cfg

    def test_comma_lists_and_comments(self):
        cfg = ExperimentConfig.parse("experiment = uad-table  # table\nq = 2, 3\ntheta = 1,180\n")
        assert cfg.q == (2, 3) and cfg.theta == (1.0, 180.0)

    def test_load(self, tmp_path):
        path = tmp_path / "cfg.txt"
        path.write_text(CONFIG_TEXT)
        assert ExperimentConfig.load(path) == ExperimentConfig.parse(CONFIG_TEXT)

    @pytest.mark.parametrize("text, match", [
        ("experiment = nope\n", "experiment"),
        ("M = 50\n", "M must"),
        ("alpha = 1.5\n", "alpha"),
        ("a = 2\n", "a must"),
        ("q = 1\n", "q must"),
        ("theta = 0\n", "theta"),
        ("bogus = 1\n", "unknown key"),
        ("M = 200\nM = 300\n", "repeated"),
        ("just words\n", "key = value"),
    ])
    def test_invalid(self, text, match):
        with pytest.raises(ValueError, match=match):
            ExperimentConfig.parse(text)

    def test_defaults(self):
        cfg = ExperimentConfig(experiment="uad-table").resolved()
        assert cfg.theta == (1.0, 10.0, 20.0, 45.0, 90.0, 135.0, 180.0)
        assert ExperimentConfig().resolved().tau == tuple(float(t) for t in range(7))


class TestCells:
    def test_keys(self):
        assert cell_keys(small_power()) == ["power/q=2/n=30/ell=2/tau=0", "power/q=2/n=30/ell=2/tau=3"]
        cfg = ExperimentConfig(experiment="null-calibration", q=(3,), n=(50,), a=(0.0, 1.0))
        assert cell_keys(cfg) == ["critval/q=3/n=50/a=0", "critval/q=3/n=50/a=1"]

    def test_power_stats(self):
        cfg = small_power()
        assert [s.label for s in power_stats(cfg, 2)] == ["rayleigh", "bingham", "tnk6_a-1", "tnk6_a0", "tnk6_a1"]
        assert power_stats(cfg, 3)[2] == StatSpec.tn(-1.0)

    def test_power_rows(self):
        cfg = small_power()
        rows = run_cell(cfg, "power/q=2/n=30/ell=2/tau=3")
        assert len(rows) == 5
        for row in rows:
            p = row["rejections"] / row["M"]
            assert 0 <= row["reject_pct"] <= 100
            assert row["se_pct"] == pytest.approx(100 * math.sqrt(p * (1 - p) / row["M"]), abs=1e-4)
            assert row["seed"] == 3 and row["cell"] == "power/q=2/n=30/ell=2/tau=3"
            assert row["kappa"] == pytest.approx(3 / math.sqrt(30))
        by_test = {r["test"]: r for r in rows}
        assert by_test["T_n,6(1)"]["theory_pct"] == ""  # threshold at ell = 4
        assert by_test["T_n,6(0)"]["theory_pct"] != ""

    def test_rerun_is_bit_identical(self):
        cfg = small_power()
        key = cell_keys(cfg)[1]
        assert run_cell(cfg, key) == run_cell(cfg, key)

    def test_alone_equals_inside_full_run(self):
        cfg = small_uad()
        full = run_experiment(cfg)
        alone = run_experiment(cfg, keys=[cell_keys(cfg)[1]])
        assert alone == [full[1]]

    def test_threads_do_not_change_rows(self):
        cfg = small_power()
        assert run_experiment(cfg, threads=2) == run_experiment(cfg, threads=1)

    def test_seed_changes_rows(self):
        a = run_cell(small_power(seed=1), "power/q=2/n=30/ell=2/tau=3")
        b = run_cell(small_power(seed=2), "power/q=2/n=30/ell=2/tau=3")
        assert [r["rejections"] for r in a] != [r["rejections"] for r in b]

    def test_null_rows_at_level(self):
        cfg = small_power(n=(40,), M=2000, m=4000, tau=(0.0,))
        for row in run_experiment(cfg):
            se = math.sqrt(0.05 * 0.95 / cfg.M) * 100
            assert abs(row["reject_pct"] - 5.0) <= 3 * se, row["test"]

    def test_uad_row_layout(self):
        rows = run_experiment(small_uad())
        assert [r["theta_deg"] for r in rows] == [10.0, 180.0]
        names = ["Rayleigh", "Bingham", "T_n^(2)", "T_n(-1)", "T_n(0)", "T_n(1)"]
        cols = list(rows[0])
        assert cols[:4] == ["q", "n", "theta_deg", "M"]
        assert cols[4:16] == [c for name in names for c in (name, f"{name} se")]

    def test_critval_rows(self, tmp_path):
        cfg = ExperimentConfig(experiment="null-calibration", q=(3,), n=(30,), a=(0.0,), m=2000,
                               method="asymptotic", alphas=(0.01, 0.1, 0.05), cache=str(tmp_path))
        rows = run_experiment(cfg)
        assert [r["alpha"] for r in rows] == [0.1, 0.05, 0.01]
        crit = [r["critical_value"] for r in rows]
        assert crit[0] < crit[1] < crit[2]
        assert rows[0]["method"] == "asymptotic"

    def test_critval_q2_untruncated_asymptotic(self):
        cfg = ExperimentConfig(experiment="null-calibration", q=(2,), n=(30,), a=(0.0,), m=500,
                               method="asymptotic")
        with pytest.raises(ValueError, match="S\\^2"):
            run_experiment(cfg)
        rows = run_experiment(ExperimentConfig(experiment="null-calibration", q=(2,), n=(30,), a=(0.0,),
                                               m=500, K=6, method="asymptotic", alphas=(0.05,)))
        assert rows[0]["test"] == "T_n,6(0)"


class TestBudget:
    def test_refuses_with_estimate(self):
        cfg = ExperimentConfig(experiment="uad-table", n=(2500,), M=10_000, max_seconds=60)
        assert estimate_seconds(cfg) > 60
        with pytest.raises(InfeasibleError, match="estimated run time"):
            run_experiment(cfg)

    def test_small_grid_feasible(self):
        assert estimate_seconds(small_power()) < 60


def test_write_rows(tmp_path):
    path = write_rows([{"a": 1, "b": 2}, {"a": 3, "c": 4}], tmp_path / "sub" / "out.csv")
    assert path.read_text().splitlines() == ["a,b,c", "1,2,", "3,,4"]
