import csv
import io
import json
import os
import subprocess
import sys
import time

import pytest

from mdshrink import __version__
from mdshrink.cli import MANIFEST_PREFIX, main, strip_manifest


def run(argv, capsys):
    code = main(argv)
    out, err = capsys.readouterr()
    return code, out, err


def parse_csv(text):
    lines = text.split("\n", 1)
    assert lines[0].startswith(MANIFEST_PREFIX)
    manifest = json.loads(lines[0][len(MANIFEST_PREFIX):])
    rows = list(csv.DictReader(io.StringIO(lines[1])))
    return manifest, rows


def find(rows, **where):
    hits = [r for r in rows if all(float(r[k]) == v if isinstance(v, float) else r[k] == v for k, v in where.items())]
    assert len(hits) == 1, where
    return hits[0]


class TestAsymLoss:
    def test_rows(self, capsys):
        code, out, _ = run(["asym-loss"], capsys)
        assert code == 0
        manifest, rows = parse_csv(out)
        assert manifest["command"] == "asym-loss" and manifest["version"] == __version__
        assert list(rows[0]) == ["beta", "alpha", "optimal_delta"]
        assert len(rows) == 5 * 291
        assert float(find(rows, beta=1.0, alpha=2.0)["optimal_delta"]) == pytest.approx(0.35355339, abs=1e-8)
        assert float(find(rows, beta=1.0, alpha=0.5)["optimal_delta"]) == pytest.approx(2.0, abs=1e-15)

    def test_continuity_at_kink(self, capsys):
        _, out, _ = run(["asym-loss", "--beta", "0.25", "--step", "0.001"], capsys)
        _, rows = parse_csv(out)
        vals = {float(r["alpha"]): float(r["optimal_delta"]) for r in rows}
        # one grid step on either side of alpha = sqrt(beta) moves the value by O(step), not O(1)
        assert abs(vals[0.501] - vals[0.5]) < 0.01
        assert abs(vals[0.5] - vals[0.499]) < 0.01
        assert vals[0.5] == pytest.approx(2.0)

    def test_round_trip_floats(self, capsys):
        _, out, _ = run(["asym-loss", "--beta", "0.4", "--alpha-min", "0.7", "--alpha-max", "0.8"], capsys)
        _, rows = parse_csv(out)
        from mdshrink.rmt import optimal_delta

        for r in rows:
            assert float(r["optimal_delta"]) == optimal_delta(float(r["alpha"]), 0.4)

    def test_bad_range(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["asym-loss", "--alpha-min", "2", "--alpha-max", "1"])
        assert exc.value.code == 2
        with pytest.raises(SystemExit) as exc:
            main(["asym-loss", "--alpha-min", "-1"])
        assert exc.value.code == 2
        with pytest.raises(SystemExit) as exc:
            main(["asym-loss", "--beta", "1.5"])
        assert exc.value.code == 2


class TestShrinkerCurve:
    def test_examples(self, capsys):
        code, out, _ = run(["shrinker-curve"], capsys)
        assert code == 0
        manifest, rows = parse_csv(out)
        assert len(rows) == 1001
        r = find(rows, **{"lambda": 4.5})
        assert float(r["eta_classical"]) == pytest.approx(1 / 3.5)
        assert float(r["eta_optimal"]) == pytest.approx(0.5)
        r = find(rows, **{"lambda": 3.9})
        assert float(r["eta_classical"]) == pytest.approx(1 / 2.9) and float(r["eta_optimal"]) == 0.0
        r = find(rows, **{"lambda": 0.5})
        assert float(r["eta_classical"]) == 0.0 and float(r["eta_optimal"]) == 0.0
        assert manifest["metadata"]["optimal_cutoff"] == 4.0

    def test_zero_on_bulk(self, capsys):
        _, out, _ = run(["shrinker-curve", "--beta", "0.5", "--sigma", "1.5"], capsys)
        manifest, rows = parse_csv(out)
        cutoff = manifest["metadata"]["optimal_cutoff"]
        assert cutoff == pytest.approx(2.25 * (1 + 0.5**0.5) ** 2)
        for r in rows:
            if float(r["lambda"]) <= cutoff:
                assert float(r["eta_optimal"]) == 0.0
            else:
                assert float(r["eta_optimal"]) > float(r["eta_classical"]) > 0.0

    def test_threshold_variant(self, capsys):
        _, out, _ = run(["shrinker-curve", "--threshold-variant", "ell-plus"], capsys)
        manifest, rows = parse_csv(out)
        assert manifest["config"]["threshold_variant"] == "ell-plus"
        assert float(find(rows, **{"lambda": 3.0})["eta_optimal"]) == pytest.approx(1.0)
        with pytest.raises(SystemExit):
            main(["shrinker-curve", "--threshold-variant", "nope"])

    def test_json(self, capsys):
        _, out, _ = run(["shrinker-curve", "--json", "--lam-max", "1"], capsys)
        doc = json.loads(out)
        assert doc["columns"] == ["lambda", "eta_classical", "eta_optimal"]
        assert len(doc["rows"]) == 101
        assert doc["manifest"]["command"] == "shrinker-curve"


class TestSpikedSim:
    ARGS = ["spiked-sim", "--n", "60", "--beta", "0.5", "--sigma", "0.45", "0.9", "--reps", "3", "--seed", "9"]

    def test_columns_and_manifest(self, capsys):
        code, out, _ = run(self.ARGS + ["--d", "2"], capsys)
        assert code == 0
        manifest, rows = parse_csv(out)
        assert list(rows[0])[:9] == [
            "beta", "sigma", "rule", "median_log_excess_loss", "iqr_low", "iqr_high",
            "clamp_count", "theoretical_optimal_loss", "critical_sigma",
        ]
        assert len(rows) == 4
        assert manifest["master_seed"] == 9
        assert "PCG64" in manifest["rng_algorithm"]
        assert manifest["config"]["spikes"] == [2.0, 1.0]
        for r in rows:
            assert float(r["iqr_low"]) <= float(r["median_log_excess_loss"]) <= float(r["iqr_high"])

    def test_deterministic_body(self, capsys):
        _, a, _ = run(self.ARGS, capsys)
        _, b, _ = run(self.ARGS, capsys)
        assert strip_manifest(a) == strip_manifest(b)
        _, c, _ = run(self.ARGS[:-1] + ["10"], capsys)
        assert strip_manifest(a) != strip_manifest(c)

    def test_smoke_default_grid(self, capsys):
        start = time.perf_counter()
        code, out, _ = run(["spiked-sim", "--reps", "2"], capsys)
        assert code == 0
        assert time.perf_counter() - start < 10.0
        assert len(parse_csv(out)[1]) == 5 * 8 * 2

    def test_output_file(self, tmp_path, capsys):
        path = tmp_path / "out.csv"
        code, out, _ = run(self.ARGS + ["--out", str(path)], capsys)
        assert code == 0 and out == ""
        assert path.read_text().startswith(MANIFEST_PREFIX)

    def test_usage_errors(self, capsys):
        for bad in (["--reps", "0"], ["--sigma", "-1"], ["--noise-scaling", "x"], ["--beta", "0"]):
            with pytest.raises(SystemExit) as exc:
                main(["spiked-sim"] + bad)
            assert exc.value.code == 2
        # too many spikes for p surfaces as a configuration error
        code, _, err = run(["spiked-sim", "--n", "4", "--beta", "0.5", "--d", "3", "--reps", "1"], capsys)
        assert code == 2 and "error" in err


class TestManifoldSim:
    def test_rows(self, capsys):
        code, out, _ = run(["manifold-sim", "--p", "20", "--beta", "0.5", "--sigma", "1", "--reps", "3"], capsys)
        assert code == 0
        manifest, rows = parse_csv(out)
        assert list(rows[0]) == ["beta", "sigma", "test_point", "rule", "mean_error", "std_error", "n_actual"]
        assert {r["test_point"] for r in rows} == {"y1", "y2"}
        assert {r["n_actual"] for r in rows} == {"40"}
        assert manifest["config"]["convention"] == "squared"

    def test_convention_flag(self, capsys):
        base = ["manifold-sim", "--p", "20", "--beta", "0.5", "--sigma", "1", "--reps", "3"]
        _, sq, _ = run(base, capsys)
        _, root, _ = run(base + ["--convention", "root"], capsys)
        assert strip_manifest(sq) != strip_manifest(root)


class TestDeterminismAcrossThreads:
    @pytest.mark.parametrize("cmd", [
        ["asym-loss", "--beta", "0.5"],
        ["shrinker-curve"],
        ["spiked-sim", "--n", "60", "--beta", "0.4", "1.0", "--sigma", "0.9", "--reps", "4"],
        ["manifold-sim", "--p", "10", "--beta", "1", "--sigma", "1", "--reps", "4"],
    ])
    def test_threads(self, cmd):
        bodies = []
        for threads in ("1", "3"):
            env = dict(os.environ, MDSHRINK_THREADS=threads)
            proc = subprocess.run([sys.executable, "-m", "mdshrink", *cmd], env=env, capture_output=True, text=True,
                                  check=True)
            bodies.append(strip_manifest(proc.stdout))
        assert bodies[0] == bodies[1]


def test_no_command_is_usage_error():
    with pytest.raises(SystemExit) as exc:
        main([])
    assert exc.value.code == 2
