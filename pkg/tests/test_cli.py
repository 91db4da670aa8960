import json

import numpy as np
import pytest

from cgat.cli import EXIT_CONFIG, EXIT_DATA, EXIT_OK, main
from cgat.dataio import load_dataset
from cgat.model import load_model

GEN = ["gen-data", "--classes", "3", "--dim", "6", "--train", "30",
       "--database", "60", "--query", "10", "--seed", "4"]
FAST_TRAIN = ["--epochs", "2", "--batch-size", "16", "--bits", "8", "--hidden-dims", "10"]


@pytest.fixture()
def ds_path(tmp_path):
    path = tmp_path / "ds.bin"
    assert main(GEN + ["--out", str(path)]) == EXIT_OK
    return path


def test_gen_data_writes_dataset_and_config_echo(ds_path):
    ds = load_dataset(ds_path)
    assert ds.features.shape == (70, 6)
    echo = json.loads((ds_path.parent / "ds.bin.config.json").read_text())
    assert echo["classes"] == 3 and echo["seed"] == 4


def test_config_file_precedence(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"classes": 3, "dim": 5, "train": 20, "database": 40,
                               "query": 8, "p-multi": 0.5}))
    out = tmp_path / "ds.bin"
    # flag --dim 7 overrides the config file's dim 5
    assert main(["gen-data", "--config", str(cfg), "--dim", "7", "--out", str(out)]) == EXIT_OK
    ds = load_dataset(out)
    assert ds.features.shape[1] == 7
    echo = json.loads((tmp_path / "ds.bin.config.json").read_text())
    assert echo["dim"] == 7 and echo["p_multi"] == 0.5


def test_unknown_config_key_is_a_config_error(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"bogus_knob": 1}))
    assert main(["gen-data", "--config", str(cfg), "--out", str(tmp_path / "x.bin")]) == EXIT_CONFIG


def test_missing_data_file_is_a_data_error(tmp_path):
    code = main(["train-baseline", "--data", str(tmp_path / "nope.bin"),
                 "--out", str(tmp_path / "m.ckpt")] + FAST_TRAIN)
    assert code == EXIT_DATA


def test_corrupt_data_file_is_a_data_error(tmp_path):
    bad = tmp_path / "bad.bin"
    bad.write_bytes(b"not a dataset at all")
    code = main(["train-baseline", "--data", str(bad), "--out", str(tmp_path / "m.ckpt")] + FAST_TRAIN)
    assert code == EXIT_DATA


def test_train_attack_evaluate_report_pipeline(tmp_path, ds_path):
    ckpt = tmp_path / "m.ckpt"
    log = tmp_path / "log.csv"
    assert main(["train-baseline", "--data", str(ds_path), "--out", str(ckpt),
                 "--log", str(log)] + FAST_TRAIN) == EXIT_OK
    model = load_model(ckpt)
    assert model.layer_dims == [6, 10, 8]
    assert log.exists()

    adv = tmp_path / "adv.bin"
    assert main(["attack", "--data", str(ds_path), "--checkpoint", str(ckpt),
                 "--out", str(adv), "--attack-steps", "5"]) == EXIT_OK
    clean = load_dataset(ds_path)
    attacked = load_dataset(adv)
    delta = np.abs(attacked.features - clean.features)
    assert delta.max() <= 8 / 255 + 1e-9
    untouched = np.setdiff1d(np.arange(70), clean.query_ids)
    assert delta[untouched].max() == 0.0

    prefix = tmp_path / "eval"
    assert main(["evaluate", "--data", str(ds_path), "--checkpoint", str(ckpt),
                 "--out-prefix", str(prefix), "--top-n", "20"]) == EXIT_OK
    metrics = prefix.with_suffix(".metrics.csv")
    assert metrics.exists() and prefix.with_suffix(".summary.txt").exists()

    table = tmp_path / "report.csv"
    assert main(["report", "--out", str(table), f"clean={metrics}"]) == EXIT_OK
    assert table.read_text().startswith("label,map,top_n,query_count")
    assert (tmp_path / "report.curves.csv").exists()


def test_train_cgat_command(tmp_path, ds_path):
    ckpt = tmp_path / "cgat.ckpt"
    assert main(["train-cgat", "--data", str(ds_path), "--out", str(ckpt),
                 "--lam", "1", "--attack-steps", "2", "--pretrain-epochs", "1"]
                + FAST_TRAIN) == EXIT_OK
    assert load_model(ckpt).n_bits == 8


def test_verification_commands_pass():
    assert main(["chcm-check", "--instances", "25"]) == EXIT_OK
    assert main(["grad-check", "--models", "1"]) == EXIT_OK


def test_invalid_hidden_dims_is_a_config_error(tmp_path, ds_path):
    code = main(["train-baseline", "--data", str(ds_path), "--out", str(tmp_path / "m.ckpt"),
                 "--hidden-dims", "0,abc"])
    assert code == EXIT_CONFIG


def test_report_rejects_malformed_entry(tmp_path):
    assert main(["report", "--out", str(tmp_path / "t.csv"), "no-equals-sign"]) == EXIT_CONFIG
