import json

import numpy as np
import pytest
import yaml

from comptarget.cli import main
from comptarget.core import DataError
from comptarget.dataio import IngestConfig, ingest_csv, write_dataset_csv
from comptarget.expost import save_policy
from comptarget.pipeline import ConfigError, RunConfig, run_pipeline, split_indices, write_bundle
from comptarget.synth import rfm_like_spec, spec_to_dict, generate

SMALL = spec_to_dict(rfm_like_spec(n=3_000, seed=21, n_spend=3))


def small_config(**overrides):
    base = {"synthetic": SMALL, "boot": 50, "k_neighbors": 20, "l_values": [1, 2, 3], "seed": 5}
    base.update(overrides)
    return RunConfig.from_mapping(base)


@pytest.fixture(scope="module")
def bundle():
    return run_pipeline(small_config())


class TestIngest:
    def test_well_formed(self, tmp_path):
        path = tmp_path / "d.csv"
        path.write_text("id,W,Y,e,x1,g\n1,1,3.5,0.5,0,a\n2,0,1.0,0.5,1,b\n3,1,0.0,0.5,1,a\n")
        data = ingest_csv(path)
        assert data.n == 3
        assert data.covariates.names == ("x1", "g")
        assert [k.value for k in data.covariates.kinds] == ["binary", "categorical"]

    def test_missing_outcome_column(self, tmp_path):
        path = tmp_path / "d.csv"
        path.write_text("W,e,x\n1,0.5,1\n")
        with pytest.raises(DataError, match="'Y'"):
            ingest_csv(path)

    def test_malformed_cells_reported_together(self, tmp_path):
        path = tmp_path / "d.csv"
        path.write_text("W,Y,e,x\n1,,0.5,1\n0,2,0.5\n")
        with pytest.raises(DataError) as info:
            ingest_csv(path)
        assert len(info.value.diagnostics) == 2

    def test_bad_propensity(self, tmp_path):
        path = tmp_path / "d.csv"
        path.write_text("W,Y,e,x\n1,1,1.0,1\n")
        with pytest.raises(DataError, match="line 2"):
            ingest_csv(path)

    def test_constant_propensity(self, tmp_path):
        path = tmp_path / "d.csv"
        path.write_text("W,Y,x\n1,1,0.3\n0,2,0.1\n")
        data = ingest_csv(path, IngestConfig(propensity=None, e=0.25))
        assert data.e.tolist() == [0.25, 0.25]

    def test_round_trip(self, tmp_path):
        data = generate(rfm_like_spec(n=200, seed=1))
        write_dataset_csv(data, tmp_path / "d.csv")
        back = ingest_csv(tmp_path / "d.csv", IngestConfig(kinds={"channel": "categorical"}))
        np.testing.assert_array_equal(back.Y, data.Y)
        np.testing.assert_array_equal(back.W, data.W)
        np.testing.assert_array_equal(back.y1, data.y1)
        for name in data.covariates.names:
            np.testing.assert_array_equal(back.covariates.columns[name], data.covariates.columns[name])


class TestConfig:
    def test_unknown_key(self):
        with pytest.raises(ConfigError):
            RunConfig.from_mapping({"synthetic": SMALL, "lvalues": [1]})

    def test_needs_one_source(self):
        with pytest.raises(ConfigError):
            RunConfig().validate()

    def test_bad_splits(self):
        with pytest.raises(ConfigError):
            small_config(splits=[0.5, 0.5, 0.1]).validate()

    def test_splits_partition_rows(self):
        a, b, c = split_indices(1000, (0.4, 0.4, 0.2), 3)
        assert (len(a), len(b), len(c)) == (400, 400, 200)
        assert len(np.unique(np.concatenate([a, b, c]))) == 1000


class TestPipeline:
    def test_in_sample_direct_profit_non_decreasing(self, bundle):
        values = [r["best_profit"] for r in bundle["direct"]]
        assert all(b >= a - 1e-9 for a, b in zip(values, values[1:]))

    def test_records_carry_provenance(self, bundle):
        for rec in bundle["profits"] + bundle["cost_of_explanation"] + bundle["targeting"]:
            assert {"stage", "seed", "split"} <= set(rec)

    def test_targeting_table(self, bundle):
        assert [r["l"] for r in bundle["targeting"]] == [1, 2, 3]
        for r in bundle["targeting"]:
            assert 0 <= r["direct_pct"] <= 100 and 0 <= r["blackbox_pct"] <= 100

    def test_cost_of_explanation_is_difference(self, bundle):
        for row in bundle["cost_of_explanation"]:
            assert row["coe_direct"] == row["blackbox_mean"] - row["direct_mean"]

    def test_all_ones_blackbox_against_blanket(self, tmp_path):
        cfg = small_config(l_values=[1])
        data = generate(rfm_like_spec(n=3_000, seed=21, n_spend=3))
        save_policy(tmp_path / "ones.csv", np.ones(data.n, dtype=int))
        cfg.blackbox = str(tmp_path / "ones.csv")
        out = run_pipeline(cfg)
        blanket = next(r for r in out["profits"] if r["policy_id"] == "blanket")
        bb = next(r for r in out["profits"] if r["policy_id"].startswith("blackbox"))
        assert bb["mean"] - blanket["mean"] == 0.0

    def test_bundle_files(self, bundle, tmp_path):
        out = write_bundle(bundle, tmp_path / "rep")
        for name in ("report.json", "metadata.json", "table_profits.csv", "series_targeting_by_l.csv"):
            assert (out / name).exists()
        assert (out / "trees" / "direct_l3.txt").exists()
        report = json.loads((out / "report.json").read_text())
        assert report["splits"] == {"A": 1200, "B": 1200, "C": 600, "n": 3000}

    def test_deterministic_bytes(self, tmp_path):
        a = write_bundle(run_pipeline(small_config(l_values=[1, 2])), tmp_path / "a")
        b = write_bundle(run_pipeline(small_config(l_values=[1, 2])), tmp_path / "b")
        files = sorted(p.relative_to(a) for p in a.rglob("*") if p.is_file() and p.name != "metadata.json")
        assert files
        for f in files:
            assert (a / f).read_bytes() == (b / f).read_bytes()


class TestCommands:
    @pytest.fixture
    def dataset(self, tmp_path):
        spec = tmp_path / "spec.yaml"
        spec.write_text(yaml.safe_dump(SMALL))
        path = tmp_path / "d.csv"
        assert main(["generate", "--config", str(spec), "--n", "800", "--out", str(path)]) == 0
        return path

    def test_clauses(self, dataset, capsys):
        assert main(["clauses", "--data", str(dataset)]) == 0
        assert json.loads(capsys.readouterr().out)["k"] > 0

    def test_optimize_and_evaluate(self, dataset, tmp_path, capsys):
        out = tmp_path / "opt"
        assert main(["optimize", "--data", str(dataset), "--l", "1", "--l", "2", "--out", str(out)]) == 0
        results = json.loads(capsys.readouterr().out)
        assert [r["trajectory"][-1]["l"] for r in results] == [1, 2]
        sentence = results[1]["sentence"]
        assert main(["evaluate", "--data", str(dataset), "--sentence", sentence, "--boot", "50"]) == 0
        rec = json.loads(capsys.readouterr().out)
        assert rec["bootstrap"]["lower"] <= rec["mean"] <= rec["bootstrap"]["upper"]
        assert main(["project", "--data", str(dataset), "--policy", str(out / "policy_l2.csv"), "--l", "2"]) == 0
        proj = json.loads(capsys.readouterr().out)
        assert proj[0]["agreement"] == 1.0

    def test_tree(self, dataset, capsys):
        main(["clauses", "--data", str(dataset)])
        label = json.loads(capsys.readouterr().out)["clauses"][0]["label"]
        assert main(["tree", "--data", str(dataset), "--sentence", f'Target customer if she "{label}"']) == 0
        assert capsys.readouterr().out.startswith("split on")

    def test_bounds_arithmetic(self, capsys):
        assert main(["bounds", "--alpha", "1", "--gamma", "1"]) == 0
        assert json.loads(capsys.readouterr().out)["guarantee"] == pytest.approx(0.6321205588)

    def test_exit_codes(self, dataset, tmp_path):
        assert main(["clauses", "--data", str(tmp_path / "missing.csv")]) == 3
        assert main(["bounds", "--alpha", "1"]) == 2
        assert main(["optimize", "--data", str(dataset), "--algo", "brute", "--l", "3", "--max-candidates", "10"]) == 4
        assert main(["tree", "--data", str(dataset), "--sentence", "Target customer if she nothing"]) == 2
