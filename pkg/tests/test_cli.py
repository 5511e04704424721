"""Run-config parsing, CLI subcommands, exit codes, and artifacts."""

import json
import subprocess
import sys

import numpy as np
import pytest

from ister.bench import fit_loglog_slope, run_bench
from ister.cli import main
from ister.config import RunConfig, SynthSpec, parse_run_config, parse_run_config_text
from ister.errors import ConfigError
from ister.model import load_checkpoint

GOOD_CONFIG = """\
schema_version = 1
out_dir = {out}
seed = 3
variant = full
data.synth.total = 140
data.synth.channels = 2
data.synth.periods = 8
data.synth.amplitudes = 1.0
data.synth.noise_sd = 0.05
data.synth.seed = 1

# tiny shapes keep the run fast
model.T = 8
model.S = 4
model.D = 8
model.k = 1
model.blocks = 1
model.dropout = 0.0
model.decomp_kernel = 3
train.learning_rate = 2e-3
train.batch_size = 16
train.max_epochs = 2
train.patience = 2
"""


def write_config(tmp_path, text=None, name="run.cfg"):
    path = tmp_path / name
    path.write_text(text if text is not None else GOOD_CONFIG.format(out=tmp_path / "runs"))
    return str(path)


# -- config parsing ---------------------------------------------------------------


def test_parse_good_config(tmp_path):
    config = parse_run_config(write_config(tmp_path))
    assert config.seed == 3
    assert config.variant == "full"
    assert config.synth == SynthSpec(
        total=140, channels=2, periods=(8.0,), amplitudes=(1.0,), noise_sd=0.05, seed=1
    )
    assert config.model_fields["T"] == 8
    assert config.train_fields["learning_rate"] == 2e-3
    assert config.csv_path is None


@pytest.mark.parametrize(
    "line,needle",
    [
        ("nonsense.key = 1", "unknown key"),
        ("model.heads 8", "expected 'key = value'"),
        ("model.heads =", "empty value"),
        ("model.heads = eight", "expects an integer"),
        ("data.zscore = maybe", "expects a boolean"),
        ("data.split = 0.7,0.3", "exactly 3"),
    ],
)
def test_parse_rejects_bad_lines(line, needle):
    text = GOOD_CONFIG.format(out="x") + line + "\n"
    with pytest.raises(ConfigError) as err:
        parse_run_config_text(text)
    assert needle in str(err.value)


def test_parse_rejects_duplicates_and_missing():
    with pytest.raises(ConfigError) as err:
        parse_run_config_text(GOOD_CONFIG.format(out="x") + "seed = 4\n")
    assert "duplicate" in str(err.value)
    with pytest.raises(ConfigError) as err:
        parse_run_config_text("schema_version = 2\nout_dir = x\n")
    assert "schema_version" in str(err.value)
    with pytest.raises(ConfigError) as err:
        parse_run_config_text("schema_version = 1\n")
    assert "out_dir" in str(err.value)
    no_model_t = GOOD_CONFIG.format(out="x").replace("model.T = 8\n", "")
    with pytest.raises(ConfigError) as err:
        parse_run_config_text(no_model_t)
    assert "model.T" in str(err.value)


def test_config_requires_exactly_one_data_source():
    with pytest.raises(ConfigError):
        RunConfig(out_dir="x", model_fields={"T": 8, "S": 4})
    both = GOOD_CONFIG.format(out="x") + "data.csv = somewhere.csv\n"
    with pytest.raises(ConfigError):
        parse_run_config_text(both)


def test_config_missing_csv_path_named(tmp_path):
    text = (
        "schema_version = 1\nout_dir = x\ndata.csv = /no/such/file.csv\n"
        "model.T = 8\nmodel.S = 4\n"
    )
    path = write_config(tmp_path, text)
    with pytest.raises(ConfigError) as err:
        parse_run_config(path)
    assert "/no/such/file.csv" in str(err.value)


def test_config_unknown_variant():
    text = GOOD_CONFIG.format(out="x").replace("variant = full", "variant = no-trend")
    with pytest.raises(ConfigError):
        parse_run_config_text(text)


# -- train ------------------------------------------------------------------------


def run_cli(capsys, *argv):
    code = main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


def test_cmd_train_writes_artifacts(tmp_path, capsys):
    config = write_config(tmp_path)
    code, out, _ = run_cli(capsys, "train", "--config", config)
    assert code == 0
    metrics = json.loads(out.strip().splitlines()[-1])
    assert {"variant", "seed", "test_mse", "test_mae", "best_epoch"} <= set(metrics)
    out_dir = tmp_path / "runs"
    for name in ("checkpoint.json", "train_report.json", "metrics.json", "scaling.json"):
        assert (out_dir / name).exists()
    assert json.loads((out_dir / "metrics.json").read_text()) == metrics
    model = load_checkpoint(str(out_dir / "checkpoint.json"))
    assert model.config.T == 8 and model.config.N == 2


def test_cmd_train_is_deterministic(tmp_path, capsys):
    config = write_config(tmp_path)
    _, out1, _ = run_cli(capsys, "train", "--config", config, "--out", str(tmp_path / "a"))
    _, out2, _ = run_cli(capsys, "train", "--config", config, "--out", str(tmp_path / "b"))
    assert out1.strip().splitlines()[-1] == out2.strip().splitlines()[-1]
    a = (tmp_path / "a" / "checkpoint.json").read_bytes()
    b = (tmp_path / "b" / "checkpoint.json").read_bytes()
    assert a == b


def test_cmd_train_variant_override(tmp_path, capsys):
    config = write_config(tmp_path)
    out_dir = str(tmp_path / "ablation")
    code, out, _ = run_cli(
        capsys, "train", "--config", config, "--variant", "no-dot", "--out", out_dir
    )
    assert code == 0
    assert json.loads(out.strip().splitlines()[-1])["variant"] == "no-dot"
    model = load_checkpoint(out_dir + "/checkpoint.json")
    assert model.config.h_attention == "none"
    assert model.config.c_attention == "none"


def test_cmd_train_missing_dataset_exits_2(tmp_path, capsys):
    text = (
        "schema_version = 1\nout_dir = x\ndata.csv = /missing/series.csv\n"
        "model.T = 8\nmodel.S = 4\n"
    )
    config = write_config(tmp_path, text)
    code, _, err = run_cli(capsys, "train", "--config", config)
    assert code == 2
    assert "/missing/series.csv" in err


def test_cmd_train_declared_n_mismatch_exits_2(tmp_path, capsys):
    config = write_config(tmp_path, GOOD_CONFIG.format(out=tmp_path / "r") + "model.N = 5\n")
    code, _, err = run_cli(capsys, "train", "--config", config)
    assert code == 2
    assert "model.N" in err or "5" in err


def test_cmd_train_divergence_exits_4(tmp_path, capsys):
    text = GOOD_CONFIG.format(out=tmp_path / "runs").replace(
        "train.learning_rate = 2e-3", "train.learning_rate = 1e130"
    )
    config = write_config(tmp_path, text)
    with np.errstate(over="ignore", invalid="ignore"):
        code, _, err = run_cli(capsys, "train", "--config", config)
    assert code == 4
    assert "numeric failure" in err


# -- synth / predict / explain -------------------------------------------------------


def make_dataset(tmp_path, capsys, name="data.csv", rows=60):
    path = str(tmp_path / name)
    code, _, _ = run_cli(
        capsys,
        "synth",
        "--out",
        path,
        "--total",
        str(rows),
        "--channels",
        "2",
        "--periods",
        "8",
        "--amplitudes",
        "1.0",
        "--noise-sd",
        "0.02",
        "--seed",
        "5",
    )
    assert code == 0
    return path


def make_checkpoint(tmp_path, capsys):
    config = write_config(tmp_path)
    out_dir = str(tmp_path / "runs")
    code, _, _ = run_cli(capsys, "train", "--config", config, "--out", out_dir)
    assert code == 0
    return out_dir + "/checkpoint.json"


def test_cmd_synth_deterministic(tmp_path, capsys):
    p1 = make_dataset(tmp_path, capsys, "a.csv")
    p2 = make_dataset(tmp_path, capsys, "b.csv")
    a, b = open(p1).read(), open(p2).read()
    assert a == b
    lines = a.strip().split("\n")
    assert lines[0] == "ch0,ch1"
    assert len(lines) == 61


def test_cmd_predict_contract(tmp_path, capsys):
    checkpoint = make_checkpoint(tmp_path, capsys)
    dataset = make_dataset(tmp_path, capsys)
    out = str(tmp_path / "forecast.csv")
    code, stdout, _ = run_cli(
        capsys, "predict", "--checkpoint", checkpoint, "--input", dataset, "--out", out
    )
    assert code == 0
    assert json.loads(stdout.strip().splitlines()[-1])["rows"] == 4
    lines = open(out).read().strip().split("\n")
    assert lines[0] == "ch0,ch1"
    assert len(lines) == 1 + 4  # header + S data rows
    # reruns are bit-identical
    out2 = str(tmp_path / "forecast2.csv")
    run_cli(capsys, "predict", "--checkpoint", checkpoint, "--input", dataset, "--out", out2)
    assert open(out).read() == open(out2).read()


def test_cmd_predict_channel_mismatch_exits_3(tmp_path, capsys):
    checkpoint = make_checkpoint(tmp_path, capsys)
    bad = tmp_path / "bad.csv"
    bad.write_text("a,b,c\n" + "\n".join("1.0,2.0,3.0" for _ in range(10)) + "\n")
    code, _, err = run_cli(
        capsys, "predict", "--checkpoint", checkpoint, "--input", str(bad), "--out", str(tmp_path / "f.csv")
    )
    assert code == 3
    assert "2" in err and "3" in err  # names both channel counts


def test_cmd_predict_short_input_exits_3(tmp_path, capsys):
    checkpoint = make_checkpoint(tmp_path, capsys)
    short = tmp_path / "short.csv"
    short.write_text("a,b\n1.0,2.0\n3.0,4.0\n")
    code, _, err = run_cli(
        capsys, "predict", "--checkpoint", checkpoint, "--input", str(short), "--out", str(tmp_path / "f.csv")
    )
    assert code == 3
    assert "T=8" in err


def test_cmd_explain_formats(tmp_path, capsys):
    checkpoint = make_checkpoint(tmp_path, capsys)
    dataset = make_dataset(tmp_path, capsys)
    report_path = str(tmp_path / "contrib.json")
    code, stdout, _ = run_cli(
        capsys, "explain", "--checkpoint", checkpoint, "--dataset", dataset, "--out", report_path
    )
    assert code == 0
    report = json.loads(open(report_path).read())
    assert sum(report["channel_scores"]) == pytest.approx(1.0, abs=1e-9)
    assert report["period_labels"][0] == "channel-token"
    csv_path = str(tmp_path / "contrib.csv")
    code, _, _ = run_cli(
        capsys,
        "explain",
        "--checkpoint",
        checkpoint,
        "--dataset",
        dataset,
        "--out",
        csv_path,
        "--format",
        "csv",
        "--branch",
        "channel",
    )
    assert code == 0
    lines = open(csv_path).read().strip().split("\n")
    assert lines[0] == "label,score,range_start,range_end"
    assert len(lines) == 3  # header + 2 channels


def test_cmd_explain_bad_layer_exits_2(tmp_path, capsys):
    checkpoint = make_checkpoint(tmp_path, capsys)
    dataset = make_dataset(tmp_path, capsys)
    code, _, err = run_cli(
        capsys,
        "explain",
        "--checkpoint",
        checkpoint,
        "--dataset",
        dataset,
        "--out",
        str(tmp_path / "r.json"),
        "--layer",
        "7",
    )
    assert code == 2
    assert "layer" in err


# -- bench -------------------------------------------------------------------------


def test_run_bench_slopes_and_grid():
    results = run_bench(["dot", "multihead"], [16, 32, 64, 128], D=16, reps=5)
    by_mech = {r.mechanism: r for r in results}
    assert 0.9 <= by_mech["dot"].slope <= 1.1
    assert 1.8 <= by_mech["multihead"].slope <= 2.2
    for r in results:
        ls = [p.L_tok for p in r.points]
        assert ls == sorted(ls) and len(set(ls)) == len(ls)
        # op-counts repeat exactly
        again = run_bench([r.mechanism], [16, 32, 64, 128], D=16, reps=5)[0]
        assert [p.op_count for p in again.points] == [p.op_count for p in r.points]


def test_run_bench_validates_grid():
    with pytest.raises(ConfigError):
        run_bench(["dot"], [16, 32], D=16, reps=5)  # too few points
    with pytest.raises(ConfigError):
        run_bench(["dot"], [16, 32, 64], D=16, reps=5)  # span 4x < 8x
    with pytest.raises(ConfigError):
        run_bench(["dot"], [16, 64, 32], D=16, reps=5)  # not increasing
    with pytest.raises(ConfigError):
        run_bench(["dot"], [16, 32, 64, 128], D=16, reps=2)  # too few reps
    with pytest.raises(ConfigError):
        run_bench(["sparse"], [16, 32, 64, 128], D=16, reps=5)


def test_fit_loglog_slope_exact_powers():
    xs = [2, 4, 8, 16]
    assert fit_loglog_slope(xs, [x**2 for x in xs]) == pytest.approx(2.0, abs=1e-12)
    assert fit_loglog_slope(xs, [5 * x for x in xs]) == pytest.approx(1.0, abs=1e-12)


def test_cmd_bench_writes_results(tmp_path, capsys):
    out = str(tmp_path / "bench.json")
    code, stdout, _ = run_cli(
        capsys, "bench", "--grid", "16,32,64,128", "--d", "16", "--reps", "5", "--out", out
    )
    assert code == 0
    slopes = json.loads(stdout.strip().splitlines()[-1])
    assert set(slopes) == {"dot", "multihead"}
    saved = json.loads(open(out).read())
    assert {r["mechanism"] for r in saved} == {"dot", "multihead"}


def test_cmd_bench_bad_grid_exits_2(tmp_path, capsys):
    code, _, err = run_cli(capsys, "bench", "--grid", "16,32")
    assert code == 2
    assert "grid" in err


# -- console entry -----------------------------------------------------------------


def test_module_entry_point_runs():
    proc = subprocess.run(
        [sys.executable, "-m", "ister.cli", "bench", "--grid", "16,32,64,128", "--d", "16"],
        capture_output=True,
        text=True,
    )
    assert proc.returncode == 0
    slopes = json.loads(proc.stdout.strip().splitlines()[-1])
    assert 0.9 <= slopes["dot"] <= 1.1
