# ============================================================================
#  File: test_cli.py
#  Purpose: Command line entry point: run, validate and compare
# ============================================================================
# SECTION 1: Imports & Test Configuration
# ============================================================================
#
import csv
import json
from pathlib import Path

import pytest

from src import cli
from src.artifacts import read_manifest, write_series_csv
from src.error_handling import EXIT_CONFIG_ERROR, EXIT_NUMERIC_ERROR, EXIT_OK
from src.experiment import (BLURRED_DIR, MANIFEST_FILE, RESIDUAL_COLUMNS, RESIDUALS_FILE, SERIES_FILE,
                            compare_runs)

CONFIG_DIR = Path(__file__).resolve().parent.parent / "config"
TOY_TEXT = (CONFIG_DIR / "toy.yaml").read_text(encoding="utf-8")

SMALL_TOY = {
    "  nx: 128": "  nx: 32",
    "  ny: 128": "  ny: 32",
    "  margin: 4": "  margin: 2",
    "  max_iter: 50": "  max_iter: 3",
    "snapshots: [1, 5, 20, 50]": "snapshots: [1, 3]",
    "blur: {nu: 5.0, window: 7}": "blur: {nu: 1.0, window: 3}",
}


def _toy_variant(tmp_path: Path, replacements: dict, name: str = "toy.yaml") -> Path:
    text = TOY_TEXT
    for old, new in replacements.items():
        assert old in text
        text = text.replace(old, new)
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return path


@pytest.fixture(autouse=True)
def quiet_logging(monkeypatch):
    """Keep the suite's log sinks in place."""
    monkeypatch.setattr(cli, "configure_logging", lambda verbose=False, log_file=None: None)
#
# ============================================================================
# SECTION 2: Validate
# ============================================================================
# Class 2.1: TestValidateCommand
# ============================================================================
#
class TestValidateCommand:
    #
    # ========================================================================
    # Method 2.1.1: test_bundled_toy
    # ========================================================================
    #
    def test_bundled_toy(self, tmp_path, capsys):
        code = cli.main(["--output-root", str(tmp_path), "validate", str(CONFIG_DIR / "toy.yaml")])
        assert code == EXIT_OK
        out = capsys.readouterr().out
        report = json.loads(out[out.index("{"):])
        assert report["name"] == "toy"
        assert report["missing_inputs"] == []
        assert set(report["arms"]) == {"raw", "blurred"}
        assert report["arms"]["raw"]["passed"] is False
        assert not (tmp_path / "toy").exists()
    #
    # ========================================================================
    # Method 2.1.2: test_invalid_file
    # ========================================================================
    #
    def test_invalid_file(self, tmp_path):
        path = _toy_variant(tmp_path, {"current: 0.01": "current: -1"})
        assert cli.main(["validate", str(path)]) == EXIT_CONFIG_ERROR
    #
    # ========================================================================
    # Method 2.1.3: test_overlapping_electrodes
    # ========================================================================
    #
    def test_overlapping_electrodes(self, tmp_path, capsys):
        path = _toy_variant(tmp_path, {"box: [1.0, 1.0, -0.15, 0.15]": "box: [-1.0, -1.0, 0.0, 0.3]"})
        assert cli.main(["validate", str(path)]) == EXIT_NUMERIC_ERROR
        assert "stage 'geometry' failed" in capsys.readouterr().err
#
# ============================================================================
# SECTION 3: Run
# ============================================================================
# Class 3.1: TestRunCommand
# ============================================================================
#
class TestRunCommand:
    """A 32x32 toy with three iterations, both arms."""
    #
    # ========================================================================
    # Method 3.1.1: test_run_writes_artifacts
    # ========================================================================
    #
    def test_run_writes_artifacts(self, tmp_path):
        path = _toy_variant(tmp_path, SMALL_TOY)
        root = tmp_path / "runs"
        assert cli.main(["--output-root", str(root), "run", str(path)]) == EXIT_OK
        run_dir = root / "toy"
        for folder in (run_dir, run_dir / BLURRED_DIR):
            assert (folder / SERIES_FILE).is_file()
            assert (folder / "sigma_final.field").is_file()
            assert (folder / "sigma_final.csv").is_file()
            assert (folder / "sigma_n003.png").is_file()
            assert not (folder / RESIDUALS_FILE).exists()
        manifest = read_manifest(run_dir / MANIFEST_FILE)
        assert manifest["name"] == "toy"
        assert manifest["knobs"]["max_iter"] == 3
        assert manifest["arms"]["blurred"]["iterations"] == 3
        assert len(manifest["content_hash"]) == 64
        paths = {a["path"] for a in manifest["arms"]["blurred"]["artifacts"]}
        assert f"{BLURRED_DIR}/{SERIES_FILE}" in paths
    #
    # ========================================================================
    # Method 3.1.2: test_residual_history
    # ========================================================================
    #
    def test_residual_history(self, tmp_path):
        changes = dict(SMALL_TOY, **{"  method: direct": "  method: cg",
                                     "  emit_heatmaps: true": "  emit_heatmaps: true\n  emit_residuals: true"})
        path = _toy_variant(tmp_path, changes)
        root = tmp_path / "runs"
        assert cli.main(["--output-root", str(root), "run", str(path)]) == EXIT_OK
        for folder in (root / "toy", root / "toy" / BLURRED_DIR):
            rows = list(csv.DictReader((folder / RESIDUALS_FILE).read_text().splitlines()))
            assert tuple(rows[0]) == RESIDUAL_COLUMNS
            assert {row["method"] for row in rows} == {"cg"}
            assert {"conduction", "poisson", "phi_psi"} <= {row["label"] for row in rows}
            assert all(float(row["relative_residual"]) >= 0.0 for row in rows)
    #
    # ========================================================================
    # Method 3.1.3: test_runs_are_reproducible
    # ========================================================================
    #
    def test_runs_are_reproducible(self, tmp_path):
        path = _toy_variant(tmp_path, SMALL_TOY)
        for root in ("first", "second"):
            assert cli.main(["--output-root", str(tmp_path / root), "run", str(path)]) == EXIT_OK
        for name in (SERIES_FILE, "sigma_final.field", f"{BLURRED_DIR}/{SERIES_FILE}"):
            first = (tmp_path / "first" / "toy" / name).read_bytes()
            second = (tmp_path / "second" / "toy" / name).read_bytes()
            assert first == second
#
# ============================================================================
# SECTION 4: Compare
# ============================================================================
# Class 4.1: TestCompareCommand
# ============================================================================
#
class TestCompareCommand:
    #
    # ========================================================================
    # Method 4.1.1: test_short_run_carries_last_value
    # ========================================================================
    #
    def test_short_run_carries_last_value(self, tmp_path, capsys):
        long_rows = [{"n": n, "step_norm": 0.1, "re": 1.0 / n} for n in range(1, 51)]
        short_rows = [{"n": n, "step_norm": 0.1, "re": 0.9, "re_hat": 0.5 / n} for n in range(1, 8)]
        write_series_csv(tmp_path / "a" / SERIES_FILE, long_rows)
        write_series_csv(tmp_path / "b" / SERIES_FILE, short_rows)
        rows = compare_runs(tmp_path / "a", tmp_path / "b")
        assert [n for n, _, _ in rows] == list(range(5, 55, 5))
        assert rows[0] == (5, pytest.approx(0.2), pytest.approx(0.1))
        assert rows[1][2] == pytest.approx(0.5 / 7)
        assert rows[-1][1] == pytest.approx(1.0 / 50)

        assert cli.main(["compare", str(tmp_path / "a"), str(tmp_path / "b")]) == EXIT_OK
        out = capsys.readouterr().out.splitlines()
        assert len(out) == 11
        assert out[1].split() == ["5", "0.2000", "0.1000"]
    #
    # ========================================================================
    # Method 4.1.2: test_missing_series
    # ========================================================================
    #
    def test_missing_series(self, tmp_path):
        (tmp_path / "a").mkdir()
        assert cli.main(["compare", str(tmp_path / "a"), str(tmp_path / "a")]) == EXIT_NUMERIC_ERROR
#
#
## End of Script
