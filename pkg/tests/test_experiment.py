import json
from dataclasses import replace

import numpy as np
import pytest

from usvr.data import DataError, Dataset, save_csv
from usvr.experiment import (
    CPU_SPEC,
    PRESETS,
    RAT_SPEC,
    ExperimentConfig,
    RealDataSpec,
    ScenarioError,
    fit_ridge,
    raw_rows_from_csv,
    run_real_dataset,
    run_scenario,
    run_universum_size_sweep,
    select_ridge,
)
from usvr.modelsel import GridSpec

TINY = GridSpec(epsilons=(0.0, 0.5), cstar_ratios=(0.0, 0.5), deltas=(0.5, 1.0))


def tiny_cfg(**kw):
    base = dict(name="tiny", n_train=15, sigma=0.0, universum=("type1",), m=20, trials=1, n_test=100, grid=TINY)
    base.update(kw)
    return ExperimentConfig(**base)


def recompute(rep):
    rows = raw_rows_from_csv(rep.to_csv())
    out = {}
    for method in rep.methods:
        v = np.array([r[f"{method}_test_nrms"] for r in rows if r["status"] == "ok"])
        out[method] = (v.mean(), v.std(ddof=1) if v.size > 1 else 0.0)
    return out


class TestConfig:
    def test_validation(self):
        with pytest.raises(ValueError):
            ExperimentConfig(trials=0)
        with pytest.raises(ValueError):
            ExperimentConfig(sigma=-1)

    def test_validation_size_defaults_to_train(self):
        assert ExperimentConfig(n_train=17).validation_size == 17

    def test_json_round_trip(self):
        cfg = tiny_cfg(universum=("type1", "type2"))
        assert ExperimentConfig.from_dict(json.loads(json.dumps(cfg.to_dict()))) == cfg

    def test_presets(self):
        assert PRESETS["table1-low-noise"].n_train == 30 and PRESETS["table1-low-noise"].sigma == 0.5
        assert PRESETS["table2"].n_train == 150
        assert PRESETS["table3"].sigma == 0.0
        for cfg in PRESETS.values():
            assert cfg.trials == 25 and cfg.n_test == 5000


class TestScenario:
    def test_smoke_single_trial(self):
        a = run_scenario(tiny_cfg())
        b = run_scenario(tiny_cfg())
        assert len(a.rows) == 1 and a.rows[0]["status"] == "ok"
        assert a.to_csv() == b.to_csv() and a.to_json() == b.to_json()

    def test_summary_recomputes_from_raw(self):
        rep = run_scenario(tiny_cfg(trials=3, sigma=0.5, universum=("type1", "type2")))
        summary = rep.summary()
        for method, (mean, std) in recompute(rep).items():
            assert summary[method]["test_nrms"]["mean"] == mean
            assert summary[method]["test_nrms"]["std"] == std

    def test_paired_trials_share_data(self):
        rep = run_scenario(tiny_cfg(trials=2, universum=("type1", "type2")))
        for r in rep.rows:
            # one SVR per trial, shared by every universum type
            assert "svr_test_nrms" in r and "usvr_type1_test_nrms" in r and "usvr_type2_test_nrms" in r

    def test_sweep_single_size_equals_scenario(self):
        cfg = tiny_cfg(trials=2)
        assert run_universum_size_sweep(cfg, [cfg.m])[0].to_csv() == run_scenario(cfg).to_csv()

    def test_sweep_shares_svr(self):
        reps = run_universum_size_sweep(tiny_cfg(trials=2), [5, 20])
        assert [r.config["m"] for r in reps] == [5, 20]
        for a, b in zip(reps[0].rows, reps[1].rows):
            assert a["svr_test_nrms"] == b["svr_test_nrms"]

    def test_sweep_needs_sizes(self):
        with pytest.raises(ValueError):
            run_universum_size_sweep(tiny_cfg(), [])

    def test_failures_abort_scenario(self):
        with pytest.raises(ScenarioError):
            run_scenario(tiny_cfg(universum=("type9",)))

    def test_write_files(self, tmp_path):
        rep = run_scenario(tiny_cfg())
        names = sorted(p.name for p in rep.write(tmp_path))
        assert names == ["tiny_hist_svr_type1.csv", "tiny_hist_usvr_type1.csv", "tiny_raw.csv", "tiny_summary.json"]
        doc = json.loads((tmp_path / "tiny_summary.json").read_text())
        assert doc["convergence"]["fits"] == 4


class TestRidge:
    def test_recovers_linear_map(self, rng):
        X = rng.normal(size=(50, 3))
        w, b = fit_ridge(Dataset(X, X @ [1.0, -2.0, 0.5] + 3.0), 1e-8)
        np.testing.assert_allclose(w, [1, -2, 0.5], atol=1e-6)
        assert b == pytest.approx(3.0, abs=1e-6)

    def test_selects_from_grid(self, rng):
        X = rng.normal(size=(30, 2))
        ds = Dataset(X, X @ [1.0, 1.0] + rng.normal(size=30))
        _, _, lam = select_ridge(ds, ds, (0.5, 1.0))
        assert lam in (0.5, 1.0)


class TestRealData:
    def write_table(self, path, rng, n=60):
        X = rng.normal(size=(n, 3))
        save_csv(Dataset(X, np.exp(X @ [0.5, -0.2, 0.1])), path, "y")
        return path

    def test_end_to_end(self, tmp_path, rng):
        path = self.write_table(tmp_path / "d.csv", rng)
        spec = RealDataSpec(name="toy", target_column="y", log_target=True, n_train=15, n_val=15, n_test=20, m=20)
        cfg = ExperimentConfig("toy", trials=3, grid=TINY, ridge=False)
        rep = run_real_dataset(path, spec, cfg)
        assert rep.methods == ["svr", "usvr_s1", "usvr_s2"]
        summary = rep.summary()
        for method in rep.methods:
            assert {"train_nrms", "test_nrms", "train_mse", "test_mse"} <= set(summary[method])
        for method, (mean, std) in recompute(rep).items():
            assert summary[method]["test_nrms"]["mean"] == mean
            assert summary[method]["test_nrms"]["std"] == std
        rows = raw_rows_from_csv(rep.to_csv())
        v = np.array([r["svr_test_mse"] for r in rows])
        assert summary["svr"]["test_mse"]["mean"] == v.mean()

    def test_missing_file_names_source(self, tmp_path):
        with pytest.raises(DataError, match="UCI"):
            run_real_dataset(tmp_path / "machine.data", CPU_SPEC, ExperimentConfig(trials=1))

    def test_preset_shapes(self):
        assert (CPU_SPEC.n_train, CPU_SPEC.n_val, CPU_SPEC.n_test) == (50, 50, 109)
        assert (RAT_SPEC.n_train, RAT_SPEC.n_val, RAT_SPEC.n_test) == (40, 40, 88)


def test_rbf_preset_grid():
    from usvr.experiment import REAL_PRESETS
    from usvr.modelsel import DEFAULT_RBF_GAMMAS
    grid = REAL_PRESETS["rat"][1].grid
    assert tuple(k.gamma for k in grid.kernels) == DEFAULT_RBF_GAMMAS
    assert grid.epsilons[0] == 0 and grid.epsilons[-1] == 64
    assert grid.cstar_ratios[0] == 0 and grid.cstar_ratios[1] == 2.0**-7
