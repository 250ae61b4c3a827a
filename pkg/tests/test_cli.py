import pathlib
import subprocess
import sys

import pytest

from openbilliard import cli
from openbilliard.scenes import (
    BUNDLED,
    bundled_scene_text,
    load_bundled,
    parse_scene,
    scenes_equal,
    serialize_scene,
)

RUN = [sys.executable, "-m", "openbilliard.cli"]


def run_cli(*args, **kw):
    return subprocess.run(RUN + list(args), capture_output=True, text=True, **kw)


@pytest.mark.parametrize("name", BUNDLED)
def test_bundled_scene_round_trip(name):
    scene = load_bundled(name)
    again = parse_scene(serialize_scene(scene))
    assert scenes_equal(scene, again)


def test_exit_codes_are_distinct():
    codes = {cli.EXIT_PARSE, cli.EXIT_VALIDATION, cli.EXIT_BOUND,
             cli.EXIT_UNRELIABLE}
    assert len(codes) == 4
    assert 0 not in codes and 2 not in codes  # 2 belongs to argparse usage errors


def test_parse_error_exit_code(tmp_path):
    bad = tmp_path / "bad.yaml"
    bad.write_text("dimension: 2\nbounding_ball: {center: [0,0], radius: 1}\n"
                   "bodies: []\nunknown_key: 5\n")
    res = run_cli("santalo-check", "--scene", str(bad), "--samples", "10")
    assert res.returncode == cli.EXIT_PARSE


def test_validation_error_exit_code(tmp_path):
    bad = tmp_path / "escapes.yaml"
    bad.write_text("dimension: 2\nbounding_ball: {center: [0.0, 0.0], radius: 1.0}\n"
                   "bodies:\n- kind: ball\n  center: [0.8, 0.0]\n  radius: 0.5\n")
    res = run_cli("volume", "--scene", str(bad), "--samples", "10")
    assert res.returncode == cli.EXIT_VALIDATION


def test_missing_scene_file_is_parse_error():
    res = run_cli("volume", "--scene", "/nonexistent.yaml", "--samples", "10")
    assert res.returncode == cli.EXIT_PARSE


def test_santalo_check_csv_schema(tmp_path):
    out = tmp_path / "r.csv"
    res = run_cli("santalo-check", "--scene", "disk_empty", "--samples", "20000",
                  "--seed", "5", "--out", str(out))
    assert res.returncode == 0
    header, row = out.read_text().strip().splitlines()
    cols = header.split(",")
    for needed in ("scene_hash", "seed", "n_samples", "t_max", "k_max",
                   "n_censored", "n_degenerate", "integral", "lambda_total",
                   "verdict"):
        assert needed in cols
    rec = dict(zip(cols, row.split(",")))
    assert rec["verdict"] == "PASS"
    assert rec["seed"] == "5"


def test_text_format(tmp_path):
    out = tmp_path / "r.txt"
    res = run_cli("trapped", "--scene", "single_ball", "--samples", "20000",
                  "--format", "text", "--out", str(out))
    assert res.returncode == 0
    text = out.read_text()
    assert "trapped:" in text and "scene_hash:" in text


def test_histogram_reports_buckets(tmp_path):
    out = tmp_path / "h.csv"
    res = run_cli("histogram", "--scene", "two_disks", "--samples", "30000",
                  "--out", str(out))
    assert res.returncode == 0
    lines = out.read_text().strip().splitlines()
    header = lines[0].split(",")
    assert {"k", "count", "mu_mass", "bucket"} <= set(header)
    buckets = {line.split(",")[header.index("bucket")] for line in lines[1:]}
    assert {"exited", "censored", "degenerate"} <= buckets
    assert "lower_bound_verdict" in header


def test_count_subcommand(tmp_path):
    out = tmp_path / "c.csv"
    res = run_cli("count", "--scene", "five_balls", "--samples", "60000",
                  "--radius", "0.3", "--out", str(out))
    assert res.returncode == 0
    header, row = out.read_text().strip().splitlines()
    rec = dict(zip(header.split(","), row.split(",")))
    assert rec["k_rounded"] == "5"


def test_sweep_requires_zero(tmp_path):
    res = run_cli("sweep", "--scene", "single_ball", "--samples", "1000",
                  "--epsilons", "0.1,0.05")
    assert res.returncode == cli.EXIT_VALIDATION


def test_sweep_outputs_rows(tmp_path):
    out = tmp_path / "s.csv"
    res = run_cli("sweep", "--scene", "single_ball", "--samples", "20000",
                  "--epsilons", "0,0.05,0.1", "--out", str(out))
    assert res.returncode == 0
    lines = out.read_text().strip().splitlines()
    assert len(lines) == 4  # header + one row per epsilon
    header = lines[0].split(",")
    first = dict(zip(header, lines[1].split(",")))
    assert float(first["epsilon"]) == 0.0
    assert float(first["deviation_from_base"]) == 0.0


@pytest.mark.parametrize("command,extra", [
    ("santalo-check", []),
    ("volume", []),
    ("trapped", []),
    ("histogram", []),
    ("count", ["--radius", "0.5"]),
    ("sweep", ["--epsilons", "0,0.02"]),
])
def test_outputs_identical_across_worker_counts(tmp_path, command, extra):
    outs = []
    for workers in ("1", "16"):
        out = tmp_path / f"{command}-{workers}.csv"
        res = run_cli(command, "--scene", "single_ball", "--samples", "20000",
                      "--seed", "11", "--workers", workers, "--out", str(out),
                      *extra)
        assert res.returncode == 0, res.stderr
        outs.append(out.read_bytes())
    assert outs[0] == outs[1]


def test_rerun_reproduces_bit_exactly(tmp_path):
    a = tmp_path / "a.csv"
    b = tmp_path / "b.csv"
    for path in (a, b):
        res = run_cli("volume", "--scene", "two_disks", "--samples", "30000",
                      "--seed", "3", "--out", str(path))
        assert res.returncode == 0
    assert a.read_bytes() == b.read_bytes()


def test_bundled_scene_files_exist_in_repo():
    data = pathlib.Path(__file__).resolve().parent.parent / "src" / "openbilliard" / "data"
    for name in BUNDLED:
        assert (data / f"{name}.yaml").exists()
        assert bundled_scene_text(name)
