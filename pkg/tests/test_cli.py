import logging
import os
from pathlib import Path

import pytest

from oodbench import (
    Detector,
    DetectorKind,
    SoftmaxClassifier,
    load_csv,
    run_benchmark,
    save_csv,
)
from oodbench.benchmark import Stage, pool_seed, stage_seed
from oodbench.cli import EXIT_ERROR, EXIT_OK, EXIT_USAGE, _log_level, main
from oodbench.samples import prob_vectors
from oodbench.utils import format_float
from tests.utils import TestCases


@pytest.fixture
def data_dir(tmp_path: Path) -> str:
    out = str(tmp_path / "data")
    code = main(
        [
            "generate",
            "--out",
            out,
            "--per-class",
            "40",
            "--pool-size",
            "60",
            "--seed",
            "2",
        ]
    )
    assert code == EXIT_OK
    return out


@pytest.fixture
def model_file(data_dir: str, tmp_path: Path) -> str:
    out = str(tmp_path / "model.txt")
    args = ["train", "--data", data_dir, "--out", out, "--epochs", "5"]
    assert main(args + ["--hidden", "8"]) == EXIT_OK
    return out


def predict(model: str, inputs: str, out: str) -> str:
    assert main(["predict", "--model", model, "--input", inputs, "--out", out]) == 0
    return out


def test_generate_writes_splits_and_pools(data_dir: str) -> None:
    assert sorted(os.listdir(data_dir)) == [
        "pool_shifted-cluster.csv",
        "pool_uniform-box.csv",
        "test.csv",
        "train.csv",
        "validation.csv",
    ]
    assert len(load_csv(os.path.join(data_dir, "train.csv"))) == 72
    assert len(load_csv(os.path.join(data_dir, "pool_uniform-box.csv"))) == 60


def test_generate_single_pool(tmp_path: Path) -> None:
    out = str(tmp_path)
    args = ["generate", "--out", out, "--per-class", "10", "--pool-size", "5"]
    assert main(args + ["--pool-mode", "shifted-cluster"]) == EXIT_OK
    assert "pool_uniform-box.csv" not in os.listdir(out)


def test_train_writes_model(model_file: str) -> None:
    model = SoftmaxClassifier.from_file(model_file)
    assert model.feature_dim == 2
    assert model.n_classes == 3
    assert model.hidden_units == 8


def test_train_with_exposure(data_dir: str, tmp_path: Path) -> None:
    out = str(tmp_path / "oe.txt")
    pool = os.path.join(data_dir, "pool_uniform-box.csv")
    args = ["train", "--data", data_dir, "--out", out, "--epochs", "3"]
    assert main(args + ["--oe-pool", pool, "--ood-seed", "9"]) == EXIT_OK
    assert SoftmaxClassifier.from_file(out).n_classes == 3


def test_predict_and_evaluate_baseline(
    data_dir: str, model_file: str, tmp_path: Path, capsys: pytest.CaptureFixture[str]
) -> None:
    val = predict(model_file, f"{data_dir}/validation.csv", str(tmp_path / "v.csv"))
    test = predict(model_file, f"{data_dir}/test.csv", str(tmp_path / "t.csv"))
    pool = predict(
        model_file, f"{data_dir}/pool_uniform-box.csv", str(tmp_path / "p.csv")
    )
    detector = str(tmp_path / "baseline.txt")
    args = ["fit-detector", "--kind", "baseline", "--validation", val]
    assert main(args + ["--out", detector]) == EXIT_OK
    assert Detector.from_file(detector).kind == DetectorKind.BASELINE

    capsys.readouterr()
    code = main(["evaluate", test, pool, "--detector", detector, "--pool", "box"])
    assert code == EXIT_OK
    lines = capsys.readouterr().out.splitlines()
    assert [line.split()[0] for line in lines] == [
        "method",
        "pool",
        "ood_error",
        "auroc",
        "fpr_at_95_tpr",
        "threshold",
    ]
    assert lines[1] == "pool box"
    assert 0.0 <= float(lines[3].split()[1]) <= 1.0


def test_fit_odin_from_features(
    data_dir: str, model_file: str, tmp_path: Path, capsys: pytest.CaptureFixture[str]
) -> None:
    detector = str(tmp_path / "odin.txt")
    val = os.path.join(data_dir, "validation.csv")
    args = ["fit-detector", "--kind", "odin", "--validation", val, "--model"]
    assert main(args + [model_file, "--out", detector]) == EXIT_OK
    assert Detector.from_file(detector).kind == DetectorKind.ODIN

    test = os.path.join(data_dir, "test.csv")
    pool = os.path.join(data_dir, "pool_shifted-cluster.csv")
    assert main(["evaluate", test, pool, "--detector", detector]) == EXIT_OK
    assert "auroc" in capsys.readouterr().out


def test_fit_gbm_and_iforest(model_file: str, tmp_path: Path) -> None:
    val = str(tmp_path / "val.csv")
    ood = str(tmp_path / "ood.csv")
    save_csv(prob_vectors(TestCases.one_hot_probs(40)), val)
    save_csv(prob_vectors(TestCases.diffuse_probs(40)), ood)
    gbm = str(tmp_path / "gbm.txt")
    args = ["fit-detector", "--kind", "gbm", "--validation", val, "--ood", ood]
    assert main(args + ["--trees", "5", "--out", gbm]) == EXIT_OK
    iforest = str(tmp_path / "iforest.txt")
    args = ["fit-detector", "--kind", "iforest", "--validation", val]
    assert main(args + ["--trees", "10", "--out", iforest]) == EXIT_OK
    assert Detector.from_file(iforest).kind == DetectorKind.IFOREST


def test_evaluate_scores(tmp_path: Path, capsys: pytest.CaptureFixture[str]) -> None:
    in_file = tmp_path / "in.csv"
    out_file = tmp_path / "out.csv"
    in_file.write_text("score\n0.9\n0.8\n0.7\n")
    out_file.write_text("score\n0.2\n0.1\n")
    code = main(["evaluate", str(in_file), str(out_file), "--threshold", "0.5"])
    assert code == EXIT_OK
    out = capsys.readouterr().out
    assert "auroc 1.0" in out
    assert "ood_error 0.0" in out
    assert "threshold 0.5" in out


def test_evaluate_larger_is_out(
    tmp_path: Path, capsys: pytest.CaptureFixture[str]
) -> None:
    in_file = tmp_path / "in.csv"
    out_file = tmp_path / "out.csv"
    in_file.write_text("score\n0.1\n0.2\n")
    out_file.write_text("score\n0.8\n0.9\n")
    code = main(["evaluate", str(in_file), str(out_file), "--larger-is-out"])
    assert code == EXIT_OK
    assert "auroc 1.0" in capsys.readouterr().out


def test_library_error_exits_one(
    tmp_path: Path, capsys: pytest.CaptureFixture[str]
) -> None:
    val = TestCases.get_path("data-files/csv/probabilities.csv")
    args = ["fit-detector", "--kind", "gbm", "--validation", val]
    assert main(args + ["--out", str(tmp_path / "d.txt")]) == EXIT_ERROR
    err = capsys.readouterr().err
    assert err == "error: OodBenchError: A gbm detector needs --ood\n"


def test_parse_error_exits_one(
    tmp_path: Path, capsys: pytest.CaptureFixture[str]
) -> None:
    bad = TestCases.get_path("data-files/csv/bad-sum.csv")
    args = ["fit-detector", "--kind", "baseline", "--validation", bad]
    assert main(args + ["--out", str(tmp_path / "d.txt")]) == EXIT_ERROR
    err = capsys.readouterr().err
    assert err.startswith("error: ParseError: ")
    assert "line 3" in err
    assert len(err.splitlines()) == 1


def test_missing_file_exits_two(
    tmp_path: Path, capsys: pytest.CaptureFixture[str]
) -> None:
    missing = str(tmp_path / "nope.txt")
    args = ["predict", "--model", missing, "--input", missing, "--out", missing]
    assert main(args) == EXIT_USAGE
    assert capsys.readouterr().err.startswith("error: FileNotFoundError: ")


def test_usage_error_exits_two() -> None:
    with pytest.raises(SystemExit) as e:
        main(["fit-detector", "--kind", "svm"])
    assert e.value.code == EXIT_USAGE


def test_benchmark_command(
    tmp_path: Path, capsys: pytest.CaptureFixture[str]
) -> None:
    config = TestCases.get_path("data-files/config/small.json")
    out = str(tmp_path / "run")
    code = main(["benchmark", "--config", config, "--output-dir", out, "--seed", "5"])
    assert code == EXIT_OK
    text = capsys.readouterr().out
    assert text.startswith("# oodbench ")
    assert "# seeds 5" in text
    assert os.path.exists(os.path.join(out, "run.json"))


def test_benchmark_sweep(tmp_path: Path, capsys: pytest.CaptureFixture[str]) -> None:
    config = TestCases.get_path("data-files/config/small.json")
    out = str(tmp_path / "sweep")
    args = ["benchmark", "--config", config, "--output-dir", out, "--seeds", "1", "2"]
    assert main(args) == EXIT_OK
    assert "# seeds 1,2" in capsys.readouterr().out
    assert sorted(os.listdir(out)) == [
        "report.csv",
        "report.txt",
        "run.json",
        "seed-1",
        "seed-2",
    ]


def test_benchmark_invalid_config(capsys: pytest.CaptureFixture[str]) -> None:
    config = TestCases.get_path("data-files/config/unknown-key.json")
    assert main(["benchmark", "--config", config, "--no-validate"]) == EXIT_ERROR
    assert capsys.readouterr().err.startswith("error: ConfigurationError: ")


@pytest.mark.parametrize(
    "verbose,quiet,level",
    [(0, True, logging.ERROR), (1, False, logging.INFO), (2, False, logging.DEBUG)],
)
def test_log_level(verbose: int, quiet: bool, level: int) -> None:
    assert _log_level(verbose, quiet) == level


def test_log_level_from_environment(monkeypatch: pytest.MonkeyPatch) -> None:
    monkeypatch.setenv("OODBENCH_LOG_LEVEL", "debug")
    assert _log_level(0, False) == logging.DEBUG
    monkeypatch.setenv("OODBENCH_LOG_LEVEL", "chatty")
    assert _log_level(0, False) == logging.WARNING


def test_commands_reproduce_a_benchmark_row(
    tmp_path: Path, capsys: pytest.CaptureFixture[str]
) -> None:
    config = TestCases.small_config()
    expected = run_benchmark(config).row("iforest", "uniform-box")
    data = str(tmp_path / "data")
    generate = ["generate", "--out", data, "--per-class", "40", "--spread", "0.05"]
    seeds = ["--seed", str(stage_seed(config.seed, Stage.DATA))]
    pool = ["--pool-mode", "uniform-box", "--pool-size", "60"]
    pool += ["--pool-seed", str(pool_seed(config.seed, 0))]
    assert main(generate + seeds + pool) == EXIT_OK

    model = str(tmp_path / "model.txt")
    train = ["train", "--data", data, "--out", model, "--epochs", "5"]
    train += ["--hidden", "8", "--seed", str(stage_seed(config.seed, Stage.TRAIN))]
    assert main(train) == EXIT_OK
    val = predict(model, f"{data}/validation.csv", str(tmp_path / "v.csv"))
    test = predict(model, f"{data}/test.csv", str(tmp_path / "t.csv"))
    box = predict(model, f"{data}/pool_uniform-box.csv", str(tmp_path / "p.csv"))

    detector = str(tmp_path / "iforest.txt")
    fit = ["fit-detector", "--kind", "iforest", "--validation", val, "--trees", "20"]
    fit += ["--seed", str(stage_seed(config.seed, Stage.FIT_DETECTORS))]
    assert main(fit + ["--out", detector]) == EXIT_OK

    capsys.readouterr()
    evaluate = ["evaluate", test, box, "--detector", detector]
    assert main(evaluate + ["--method", "iforest", "--pool", "uniform-box"]) == 0
    lines = {}
    for line in capsys.readouterr().out.splitlines():
        key, value = line.split()
        lines[key] = value
    assert lines["method"] == "iforest"
    assert lines["ood_error"] == format_float(expected.ood_error)
    assert lines["auroc"] == format_float(expected.auroc)
    assert lines["fpr_at_95_tpr"] == format_float(expected.fpr_at_95_tpr)
