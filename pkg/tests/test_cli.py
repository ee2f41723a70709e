import csv
import json

import pytest

from pocfinder.cli import main


GEN = ["generate", "--cards", "400", "--terminals", "12", "--weeks", "4",
       "--txn-mean", "6", "--seed", "3"]


@pytest.fixture
def pipeline(tmp_path):
    """Run generate -> inject -> ingest once; return the directories."""
    gen = tmp_path / "gen"
    inj = tmp_path / "inj"
    ing = tmp_path / "ing"
    assert main(GEN + ["-o", str(gen)]) == 0
    assert main(["inject", "--input", str(gen / "transactions.csv"),
                 "--pocs", "2", "--p", "0.5", "--min-bucket-cards", "10",
                 "--seed", "5", "-o", str(inj)]) == 0
    assert main(["ingest", "--input", str(inj / "transactions.csv"),
                 "--min-fraud-cards", "2", "-o", str(ing)]) == 0
    return {"gen": gen, "inj": inj, "ing": ing, "tmp": tmp_path}


def test_generate_writes_corpus_and_manifest(tmp_path):
    out = tmp_path / "g"
    assert main(GEN + ["-o", str(out)]) == 0
    rows = list(csv.DictReader(open(out / "transactions.csv")))
    assert rows and set(rows[0]) == {"card_id", "terminal_id", "timestamp",
                                     "amount", "is_fraud"}
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["command"] == "generate"
    assert manifest["params"]["seed"] == 3
    assert "version" in manifest


def test_generate_requires_seed(tmp_path, capsys):
    assert main(["generate", "-o", str(tmp_path / "x")]) == 1
    assert "--seed" in capsys.readouterr().err


def test_inject_requires_seed(tmp_path):
    assert main(["inject", "--input", "nope.csv",
                 "-o", str(tmp_path / "x")]) == 1


def test_unknown_flag_is_usage_error(tmp_path):
    assert main(GEN + ["--wat", "-o", str(tmp_path / "x")]) == 1


def test_missing_input_is_data_error(tmp_path):
    out = tmp_path / "x"
    assert main(["ingest", "--input", str(tmp_path / "missing.csv"),
                 "-o", str(out)]) == 2
    # partial outputs cleaned up
    assert not (out / "manifest.json").exists()
    assert not (out / "graph.pocg").exists()


def test_inject_deterministic(pipeline):
    gen = pipeline["gen"]
    a = pipeline["tmp"] / "a"
    b = pipeline["tmp"] / "b"
    args = ["inject", "--input", str(gen / "transactions.csv"),
            "--pocs", "2", "--p", "0.5", "--min-bucket-cards", "10",
            "--seed", "5"]
    assert main(args + ["-o", str(a)]) == 0
    assert main(args + ["-o", str(b)]) == 0
    for name in ("transactions.csv", "ground_truth.json"):
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_ingest_stats(pipeline):
    stats = json.loads((pipeline["ing"] / "stats.json").read_text())
    assert stats["cards"] > 0
    assert stats["fraud_cards"] > 0
    assert stats["rows_skipped"] == 0


def test_detect_outputs(pipeline, tmp_path):
    out = tmp_path / "det"
    assert main(["detect", "--graph", str(pipeline["ing"] / "graph.pocg"),
                 "--workers", "2", "--blames", "-o", str(out)]) == 0
    locations = list(csv.DictReader(open(out / "locations.csv")))
    assert locations
    thetas = [float(r["theta"]) for r in locations]
    assert thetas == sorted(thetas, reverse=True)
    assert (out / "convergence.csv").exists()
    assert (out / "convergence.png").exists()
    assert (out / "timing.csv").exists()
    blames = list(csv.DictReader(open(out / "blames.csv")))
    assert blames and all(float(r["blame"]) >= 0 for r in blames)


def test_detect_worker_counts_agree(pipeline, tmp_path):
    graph = str(pipeline["ing"] / "graph.pocg")
    outs = []
    for w in (1, 4):
        out = tmp_path / f"det{w}"
        assert main(["detect", "--graph", graph, "--workers", str(w),
                     "-o", str(out)]) == 0
        outs.append((out / "locations.csv").read_bytes())
    assert outs[0] == outs[1]


def test_detect_strict_nonconvergence_exit_3(pipeline, tmp_path):
    out = tmp_path / "strict"
    rc = main(["detect", "--graph", str(pipeline["ing"] / "graph.pocg"),
               "--epsilon", "1e-300", "--max-iterations", "2",
               "--strict", "-o", str(out)])
    assert rc == 3


def test_baseline_methods(pipeline, tmp_path):
    graph = str(pipeline["ing"] / "graph.pocg")
    for method in ("ratio", "ratio-prior", "vertex-cover", "fabp"):
        out = tmp_path / f"base-{method}"
        assert main(["baseline", "--graph", graph, "--method", method,
                     "-o", str(out)]) == 0
        rows = list(csv.DictReader(open(out / "locations.csv")))
        assert rows


def test_baseline_unknown_method(pipeline, tmp_path):
    assert main(["baseline", "--graph", "x", "--method", "nope",
                 "-o", str(tmp_path / "y")]) == 1


def test_eval_end_to_end(pipeline, tmp_path):
    graph = str(pipeline["ing"] / "graph.pocg")
    det = tmp_path / "det"
    base = tmp_path / "base"
    assert main(["detect", "--graph", graph, "-o", str(det)]) == 0
    assert main(["baseline", "--graph", graph, "--method", "ratio",
                 "-o", str(base)]) == 0
    out = tmp_path / "eval"
    rc = main(["eval", "--truth", str(pipeline["inj"] / "ground_truth.json"),
               "--ranking", f"detector={det / 'locations.csv'}",
               "--ranking", f"ratio={base / 'locations.csv'}",
               "-o", str(out)])
    assert rc == 0
    summary = json.loads((out / "summary.json").read_text())
    assert set(summary) == {"detector", "ratio"}
    for entry in summary.values():
        assert 0.0 <= entry["average_precision"] <= 1.0
        assert 0.0 <= entry["auc"] <= 1.0
    for name in ("pr_curves.png", "roc_curves.png", "pr_detector.csv",
                 "roc_ratio.csv"):
        assert (out / name).exists()


def test_eval_bad_ranking_spec(pipeline, tmp_path):
    rc = main(["eval", "--truth", str(pipeline["inj"] / "ground_truth.json"),
               "--ranking", "detector", "-o", str(tmp_path / "e")])
    assert rc == 1


def test_manifest_records_input_digest(pipeline):
    manifest = json.loads((pipeline["ing"] / "manifest.json").read_text())
    digest = manifest["inputs"]["input"]["sha256"]
    assert len(digest) == 64
    import hashlib
    raw = (pipeline["inj"] / "transactions.csv").read_bytes()
    assert digest == hashlib.sha256(raw).hexdigest()


def test_config_file_with_flag_precedence(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# generator settings\ncards=100\nterminals=5\n"
                   "weeks=2\ntxn_mean=4\n")
    out = tmp_path / "out"
    assert main(["generate", "--config", str(cfg), "--cards", "50",
                 "--seed", "1", "-o", str(out)]) == 0
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["params"]["cards"] == 50        # flag wins
    assert manifest["params"]["terminals"] == 5     # config beats default
    assert manifest["params"]["weeks"] == 2


def test_config_file_bad_line(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("this is not key value\n")
    assert main(["generate", "--config", str(cfg), "--seed", "1",
                 "-o", str(tmp_path / "o")]) == 1


def test_skip_bad_rows(tmp_path):
    csv_path = tmp_path / "in.csv"
    csv_path.write_text("card_id,terminal_id,timestamp,amount,is_fraud\n"
                        "c1,t1,0,100,1\n"
                        "c2,t1,0,-3,1\n"
                        "c3,t1,0,100,1\n")
    out = tmp_path / "out"
    assert main(["ingest", "--input", str(csv_path), "--skip-bad-rows",
                 "--min-fraud-cards", "1", "-o", str(out)]) == 0
    stats = json.loads((out / "stats.json").read_text())
    assert stats["rows_skipped"] == 1
    assert stats["cards"] == 2
    # without the flag the same file is a data error
    assert main(["ingest", "--input", str(csv_path),
                 "--min-fraud-cards", "1", "-o", str(tmp_path / "o2")]) == 2


def test_bench_small(tmp_path):
    out = tmp_path / "bench"
    assert main(["bench", "--edges", "2000,5000", "--iterations", "2",
                 "--seed", "0", "-o", str(out)]) == 0
    rows = list(csv.DictReader(open(out / "scaling.csv")))
    assert len(rows) == 2
    assert all(float(r["seconds_per_iteration"]) > 0 for r in rows)
    assert (out / "scaling.png").exists()
    assert (out / "timing.csv").exists()


def test_savings_command(tmp_path):
    csv_path = tmp_path / "txns.csv"
    with open(csv_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["card_id", "terminal_id", "timestamp", "amount",
                         "is_fraud"])
        week = 7 * 86400
        anchor = 4 * 86400
        for i in range(6):
            writer.writerow([f"c{i}", "tP", anchor + i, 100, 0])
        for i in range(6):
            writer.writerow([f"c{i}", f"t{i}", anchor + 2 * week + i,
                             5000, 1])
    out = tmp_path / "sav"
    assert main(["savings", "--transactions", str(csv_path),
                 "--min-fraud-cards", "2", "--threshold", "0.05",
                 "-o", str(out)]) == 0
    result = json.loads((out / "savings.json").read_text())
    assert "total_net" in result
    assert (out / "savings.csv").exists()
    assert (out / "savings.png").exists()


def test_version_flag(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["--version"])
    assert exc.value.code == 0
