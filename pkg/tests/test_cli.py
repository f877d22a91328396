import json

import numpy as np
import pytest

from pjstrack.cli import main, parse_seeds, UsageError
from pjstrack.evalkit import load_sequence

FAST = ["--set", "n_particles=30", "--set", "n_targets=3"]


@pytest.fixture
def seq(tmp_path):
    path = tmp_path / "translate"
    assert main(["synth", "--kind", "translate", "--out", str(path), "--frames", "5"]) == 0
    return path


def track(seq, out, seeds="0..1", extra=()):
    return main(["track", "--seq", str(seq), "--seeds", seeds, "--out", str(out), *FAST, *extra])


def test_parse_seeds():
    assert parse_seeds("0..9") == list(range(10))
    assert parse_seeds("3,5") == [3, 5]
    assert parse_seeds("7") == [7]
    with pytest.raises(UsageError):
        parse_seeds("")
    with pytest.raises(UsageError):
        parse_seeds("5..4")


def test_ten_seeds_ten_files(seq, tmp_path):
    assert track(seq, tmp_path / "runs", "0..9") == 0
    files = sorted(p.name for p in (tmp_path / "runs" / "translate").glob("seed*.csv"))
    assert files == [f"seed{i:02d}.csv" for i in range(10)]


def test_empty_seed_list_is_usage_error(seq, tmp_path, capsys):
    with pytest.raises(SystemExit) as exc:
        track(seq, tmp_path / "runs", "")
    assert exc.value.code == 2
    assert "empty" in capsys.readouterr().err


def test_unknown_config_key_is_usage_error(seq, tmp_path, capsys):
    with pytest.raises(SystemExit) as exc:
        track(seq, tmp_path / "runs", extra=["--set", "wobble=3"])
    assert exc.value.code == 2
    assert "wobble" in capsys.readouterr().err


def test_config_file_roundtrip(seq, tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"n_particles": 25, "sparsity": 3}))
    out = tmp_path / "runs"
    assert main(["track", "--config", str(cfg), "--seq", str(seq), "--seeds", "0",
                 "--out", str(out), "--set", "n_targets=3", "--solver", "pjs-s"]) == 0
    dumped = json.loads((out / "config.json").read_text())
    assert dumped["n_particles"] == 25 and dumped["sparsity"] == 3 and dumped["n_targets"] == 3
    assert dumped["gamma"] == 0.001 and dumped["solver"] == "pjs-s"


def test_missing_sequence_fails(tmp_path, capsys):
    assert main(["track", "--seq", str(tmp_path / "nope"), "--out", str(tmp_path / "o")]) == 1
    assert "missing" in capsys.readouterr().err


def test_eval_round_trip(seq, tmp_path, capsys):
    runs = tmp_path / "runs"
    assert track(seq, runs) == 0
    assert main(["eval", "--results", str(runs), "--seq", str(seq), "--threshold", "0.6"]) == 0
    printed = capsys.readouterr().out
    assert "sr@0.60" in printed
    out = runs / "translate"
    for name in ("report.csv", "success.csv", "cle.svg", "overlap.svg", "success.svg"):
        assert (out / name).is_file()


def test_eval_missing_runs(seq, tmp_path):
    assert main(["eval", "--results", str(tmp_path / "empty"), "--seq", str(seq)]) == 1


def test_eval_length_mismatch(seq, tmp_path, capsys):
    runs = tmp_path / "runs"
    assert track(seq, runs, "0") == 0
    # regenerate the sequence with one more frame than the runs cover
    main(["synth", "--kind", "translate", "--out", str(seq), "--frames", "6"])
    assert main(["eval", "--results", str(runs), "--seq", str(seq)]) == 1
    assert "ground truth has 6" in capsys.readouterr().err


def test_synth_kinds(tmp_path):
    main(["synth", "--kind", "static", "--out", str(tmp_path / "s")])
    s = load_sequence(tmp_path / "s")
    frames = list(s.iter_frames())
    assert len(frames) == 20 and all(np.array_equal(f, frames[0]) for f in frames)
    assert np.all(s.ground_truth == s.ground_truth[0])

    main(["synth", "--kind", "translate", "--out", str(tmp_path / "t"), "--speed", "2"])
    assert np.all(np.diff(load_sequence(tmp_path / "t").ground_truth[:, 0]) == 2)

    main(["synth", "--kind", "occlude", "--out", str(tmp_path / "o")])
    o = load_sequence(tmp_path / "o")
    x, y, w, h = (int(v) for v in o.ground_truth[11])
    frame = list(o.iter_frames())[11]
    lower = frame[y + h // 2 : y + h, x : x + w]
    assert np.ptp(lower) == 0
    assert np.ptp(list(o.iter_frames())[9][y + h // 2 : y + h, x : x + w]) > 0


def test_synth_unwritable(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    assert main(["synth", "--kind", "static", "--out", str(blocker / "sub")]) == 1


def test_output_independent_of_worker_count(seq, tmp_path, monkeypatch):
    outs = {}
    for threads in ("1", "2"):
        monkeypatch.setenv("PJS_THREADS", threads)
        out = tmp_path / f"w{threads}"
        assert track(seq, out, "0..2") == 0
        outs[threads] = {p.name: p.read_bytes() for p in (out / "translate").glob("*.csv")}
    assert outs["1"] == outs["2"] and len(outs["1"]) == 3


def test_bad_thread_env(seq, tmp_path, monkeypatch):
    monkeypatch.setenv("PJS_THREADS", "many")
    with pytest.raises(SystemExit):
        track(seq, tmp_path / "runs")


def test_dump_dict(seq, tmp_path):
    assert track(seq, tmp_path / "runs", "0", extra=["--dump-dict"]) == 0
    snaps = sorted((tmp_path / "runs" / "translate" / "seed00_dict").iterdir())
    assert len(snaps) == 5
    assert snaps[0].read_text().splitlines()[0] == "64 48"
