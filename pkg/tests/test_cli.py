"""Command-line interface, driven in-process through cli.main()."""

import json

import pytest

from gaze3d import cli


def run(capsys, *argv):
    code = cli.main([str(a) for a in argv])
    captured = capsys.readouterr()
    return code, captured.out, captured.err


@pytest.fixture()
def dataset(tmp_path, capsys):
    path = tmp_path / "data.jsonl"
    code, _, _ = run(capsys, "simulate", "--depths", "1.0,1.5",
                     "--seed", "4", "--out", path)
    assert code == 0
    return path


# ── simulate ─────────────────────────────────────────────────────────────

def test_simulate_defaults(tmp_path, capsys):
    out = tmp_path / "d.jsonl"
    code, stdout, _ = run(capsys, "simulate", "--out", out)
    assert code == 0
    assert "125 calibration + 80 test" in stdout
    assert len(out.read_text().splitlines()) == 1 + 5 * (25 + 16)


def test_simulate_reruns_are_byte_identical(tmp_path, capsys):
    a, b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
    run(capsys, "simulate", "--seed", "9", "--noise-px", "0.5", "--out", a)
    run(capsys, "simulate", "--seed", "9", "--noise-px", "0.5", "--out", b)
    assert a.read_bytes() == b.read_bytes()


def test_flags_override_config_file(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"seed": 3, "depths": [1.0]}))
    a, b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
    run(capsys, "simulate", "--config", cfg, "--seed", "5", "--out", a)
    run(capsys, "simulate", "--seed", "5", "--depths", "1.0", "--out", b)
    assert a.read_bytes() == b.read_bytes()


# ── fit / evaluate ───────────────────────────────────────────────────────

def test_fit_then_evaluate(dataset, tmp_path, capsys):
    model = tmp_path / "model.json"
    code, stdout, _ = run(capsys, "fit", dataset, "--mappers", "2d3d",
                          "--out", model)
    assert code == 0
    assert "2d3d fitted on 50 samples" in stdout

    code, stdout, _ = run(capsys, "evaluate", model, dataset)
    assert code == 0
    lines = stdout.splitlines()
    assert len(lines) == 2
    assert lines[0].startswith("mapper=2d3d test_depth_m=1.0 n=16 mean_deg=")
    assert all(line.endswith("reference=e_gt") for line in lines)
    means = [float(line.split("mean_deg=")[1].split()[0]) for line in lines]
    assert all(m < 0.5 for m in means)     # noiseless two-depth fit


def test_evaluate_depth_filter_and_csv(dataset, tmp_path, capsys):
    model = tmp_path / "model.json"
    run(capsys, "fit", dataset, "--mappers", "2d2d", "--depths", "1.0",
        "--out", model)
    out = tmp_path / "results.csv"
    code, stdout, _ = run(capsys, "evaluate", model, dataset,
                          "--depths", "1.5", "--out", out)
    assert code == 0
    assert len(stdout.splitlines()) == 1
    header, row = out.read_text().splitlines()
    assert header == "test_depth_m,n_targets,mean_error_deg,std_error_deg"
    assert row.startswith("1.5,16,")


def test_fit_requires_exactly_one_mapper(dataset, capsys):
    code, _, stderr = run(capsys, "fit", dataset,
                          "--mappers", "2d2d,3d3d")
    assert code == 1
    assert stderr.startswith("error: CliUsageError:")
    code, _, stderr = run(capsys, "fit", dataset)   # default = all three
    assert code == 1


def test_fit_warns_on_missing_pose(dataset, tmp_path, capsys):
    lines = dataset.read_text().splitlines()
    stripped = [lines[0]] + [
        json.dumps({**json.loads(s), "pupil_pose": None},
                   sort_keys=True, separators=(",", ":"))
        for s in lines[1:]
    ]
    poseless = tmp_path / "poseless.jsonl"
    poseless.write_text("\n".join(stripped) + "\n")

    model = tmp_path / "m.json"
    code, _, stderr = run(capsys, "fit", poseless, "--mappers", "2d2d",
                          "--out", model)
    assert code == 0
    assert "lack pupil_pose" in stderr

    code, _, stderr = run(capsys, "fit", poseless, "--mappers", "3d3d",
                          "--out", model)
    assert code == 1
    assert "no usable calibration samples" in stderr


def test_evaluate_unknown_depth(dataset, tmp_path, capsys):
    model = tmp_path / "model.json"
    run(capsys, "fit", dataset, "--mappers", "2d3d", "--out", model)
    code, _, stderr = run(capsys, "evaluate", model, dataset,
                          "--depths", "3.0")
    assert code == 1
    assert "3.0" in stderr


# ── sweep ────────────────────────────────────────────────────────────────

def test_sweep_small(tmp_path, capsys):
    out = tmp_path / "sweep.csv"
    code, stdout, _ = run(capsys, "sweep", "--depths", "1.0,1.5",
                          "--mappers", "2d2d,3d3d", "--seed", "2",
                          "--out", out)
    assert code == 0
    assert "12 rows (0 failed fits)" in stdout
    assert "2d2d mean_deg by depth count: k=1:" in stdout
    assert len(out.read_text().splitlines()) == 1 + 12


# ── selftest ─────────────────────────────────────────────────────────────

def test_selftest_passes(capsys):
    code, stdout, _ = run(capsys, "selftest")
    assert code == 0
    assert stdout.splitlines()[-1] == "selftest: all checks passed"


# ── failure contract ─────────────────────────────────────────────────────

def test_errors_are_single_line_on_stderr(tmp_path, capsys):
    code, stdout, stderr = run(capsys, "fit", tmp_path / "nope.jsonl",
                               "--mappers", "2d2d")
    assert code == 1
    assert stdout == ""
    assert stderr.startswith("error: FileNotFoundError:")
    assert stderr.count("\n") == 1 and stderr.endswith("\n")


def test_unknown_config_key_is_reported(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"seed": 1, "bogus_key": 2}))
    code, _, stderr = run(capsys, "simulate", "--config", cfg,
                          "--out", tmp_path / "d.jsonl")
    assert code == 1
    assert stderr.startswith("error: ConfigError:")
    assert "bogus_key" in stderr


def test_bad_flag_values(tmp_path, capsys):
    code, _, stderr = run(capsys, "simulate", "--depths", "one,two",
                          "--out", tmp_path / "d.jsonl")
    assert code == 1 and "--depths" in stderr
    code, _, stderr = run(capsys, "sweep", "--mappers", "5d",
                          "--out", tmp_path / "s.csv")
    assert code == 1 and "--mappers" in stderr
    code, _, stderr = run(capsys, "frobnicate")
    assert code == 1
    assert stderr.startswith("error: CliUsageError:")


def test_version_flag(capsys):
    with pytest.raises(SystemExit) as exc:
        cli.main(["--version"])
    assert exc.value.code == 0
    assert capsys.readouterr().out.startswith("gaze3d ")
