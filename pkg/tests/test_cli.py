import json
from pathlib import Path

import numpy as np
import pytest

from voteclust.cli import main
from voteclust.metrics import mean_silhouette
from voteclust.mmcc import MmccConfig
from voteclust.preprocess import load_csv

SWEEP_FLAGS = [
    "--kmin", "2", "--kmax", "6", "--base", "kmeans",
    "--resamples", "40", "--seed", "3",
]


@pytest.fixture(scope="module")
def blob_csv(tmp_path_factory):
    path = tmp_path_factory.mktemp("data") / "blobs3.csv"
    assert main([
        "generate", "--shape", "blobs", "--n", "90", "--clusters", "3",
        "--noise", "0.5", "--seed", "7", "--out", str(path),
    ]) == 0
    return path


@pytest.fixture(scope="module")
def sweep_dir(blob_csv, tmp_path_factory):
    out = tmp_path_factory.mktemp("sweep") / "run1"
    assert main([
        "sweep", "--input", str(blob_csv), "--label-col", "label",
        *SWEEP_FLAGS, "--out", str(out),
    ]) == 0
    return out


def read_table(out_dir):
    lines = (out_dir / "cic_table.tsv").read_text().splitlines()
    header = lines[0].split("\t")
    rows = [dict(zip(header, ln.split("\t"))) for ln in lines[1:]]
    return header, rows


# ---------------------------------------------------------------- generate


def test_generate_roundtrip(blob_csv):
    data, labels = load_csv(blob_csv, label_columns="label")
    assert data.n_cases == 90 and data.n_features == 2
    assert labels.k == 3
    assert np.bincount(labels.labels)[1:].sum() == 90


def test_generate_stdout(capsys):
    assert main(["generate", "--shape", "ring", "--n", "8", "--seed", "1",
                 "--out", "-"]) == 0
    out = capsys.readouterr().out
    assert out.splitlines()[0] == "x,y,label"
    assert len(out.splitlines()) == 9


def test_generate_clusters_flag_guard(tmp_path):
    assert main(["generate", "--shape", "ring", "--n", "8", "--clusters", "3",
                 "--out", str(tmp_path / "x.csv")]) == 2


# ------------------------------------------------------------------- sweep


def test_sweep_selects_true_k(sweep_dir):
    manifest = json.loads((sweep_dir / "manifest.json").read_text())
    assert manifest["selected_k"] == 3
    assert manifest["status"] == "ok"


def test_sweep_table_columns_and_identity(sweep_dir):
    header, rows = read_table(sweep_dir)
    assert header == ["k", "silhouette", "information", "uncertainty", "cic", "degenerate"]
    assert [r["k"] for r in rows] == ["2", "3", "4", "5", "6"]
    for r in rows:
        cic = float(r["cic"])
        assert cic == pytest.approx(float(r["information"]) - float(r["uncertainty"]), abs=1e-9)
        assert r["degenerate"] == "0"


def test_sweep_emits_per_k_files(sweep_dir):
    for k in range(2, 7):
        for stem in ("probabilities", "assignment", "diagnostics", "trace"):
            assert (sweep_dir / f"{stem}_k{k}.tsv").is_file()
    probs = (sweep_dir / "probabilities_k3.tsv").read_text().splitlines()
    assert probs[0] == "case\tk1\tk2\tk3"
    assert len(probs) == 91


def test_sweep_manifest_provenance(sweep_dir, blob_csv):
    manifest = json.loads((sweep_dir / "manifest.json").read_text())
    assert manifest["version"]
    assert len(manifest["input_sha256"]) == 64
    assert manifest["mmcc"]["seed"] == 3
    assert manifest["mmcc"]["resamples"] == 40
    # provenance only: nothing run-specific like timestamps or thread counts
    assert "threads" not in json.dumps(manifest)
    assert "time" not in manifest


def test_sweep_rerun_and_threads_byte_identical(blob_csv, sweep_dir, tmp_path):
    for extra, out in ((["--threads", "1"], tmp_path / "t1"), (["--threads", "2"], tmp_path / "t2")):
        assert main([
            "sweep", "--input", str(blob_csv), "--label-col", "label",
            *SWEEP_FLAGS, *extra, "--out", str(out),
        ]) == 0
        for ref in sorted(sweep_dir.iterdir()):
            assert (out / ref.name).read_bytes() == ref.read_bytes(), ref.name


def test_sweep_single_k(blob_csv, tmp_path, capsys):
    out = tmp_path / "one"
    assert main([
        "sweep", "--input", str(blob_csv), "--label-col", "label",
        "--kmin", "2", "--kmax", "2", "--base", "kmeans",
        "--resamples", "30", "--seed", "1", "--out", str(out),
    ]) == 0
    assert "selected_k=2" in capsys.readouterr().out
    _, rows = read_table(out)
    assert len(rows) == 1


def test_sweep_all_degenerate_exit_4(tmp_path):
    csv = tmp_path / "tiny.csv"
    csv.write_text("x,y\n" + "".join(f"{i % 4},{i % 4}\n" for i in range(8)))
    out = tmp_path / "deg"
    assert main([
        "sweep", "--input", str(csv), "--kmin", "6", "--kmax", "6",
        "--resamples", "8", "--out", str(out),
    ]) == 4
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["selected_k"] is None
    assert manifest["status"] == "all-degenerate"
    assert manifest["excluded_k"] == [6]
    _, rows = read_table(out)
    assert rows[0]["degenerate"] == "1"


def test_sweep_emit_flags_suppress_per_k_files(blob_csv, tmp_path):
    from voteclust.cli import SweepConfig, run_sweep

    data, _ = load_csv(blob_csv, label_columns="label")
    out = tmp_path / "lean"
    report = run_sweep(data, SweepConfig(
        k_min=2, k_max=3, out_dir=out,
        template={"base": "kmeans", "resamples": 30, "seed": 1},
        emit_probabilities=False, emit_assignments=False,
        emit_diagnostics=False, emit_trace=False,
    ))
    assert report.selected_k in (2, 3)
    assert [f.name for f in sorted(out.iterdir())] == ["cic_table.tsv"]


def test_sweep_config_errors_exit_2(blob_csv, tmp_path):
    base = ["sweep", "--input", str(blob_csv), "--out", str(tmp_path / "x")]
    assert main(base + ["--kmin", "5", "--kmax", "2"]) == 2
    assert main(base + ["--ratio-col", "nope"]) == 2
    assert main(base + ["--resamples", "1"]) == 2


def test_sweep_data_errors_exit_3(tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("x,y\n1,2\n1,oops\n")
    assert main(["sweep", "--input", str(bad), "--out", str(tmp_path / "o")]) == 3
    assert main(["sweep", "--input", str(tmp_path / "missing.csv"),
                 "--out", str(tmp_path / "o")]) == 3


# -------------------------------------------------------------- silhouette


def test_silhouette_matches_direct_baseline(blob_csv, capsys):
    assert main([
        "silhouette", "--input", str(blob_csv), "--label-col", "label",
        "--kmin", "2", "--kmax", "3", "--base", "kmeans", "--seed", "3",
    ]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "k\tsilhouette"
    got = {int(ln.split("\t")[0]): float(ln.split("\t")[1]) for ln in lines[1:]}
    assert set(got) == {2, 3}
    # one full-sample base fit per K, scored by plain mean silhouette width
    data, _ = load_csv(blob_csv, label_columns="label")
    rng = np.random.default_rng(np.random.SeedSequence((3, 3, 0x0B5E)))
    model = MmccConfig(k=3, base="kmeans", seed=3).base_fitter(data.values, 3, rng)
    assert got[3] == pytest.approx(mean_silhouette(data.values, model.assignment))


def test_silhouette_matches_sweep_column(blob_csv, sweep_dir, tmp_path):
    out = tmp_path / "sil.tsv"
    assert main([
        "silhouette", "--input", str(blob_csv), "--label-col", "label",
        *SWEEP_FLAGS, "--out", str(out),
    ]) == 0
    sil = {ln.split("\t")[0]: ln.split("\t")[1]
           for ln in out.read_text().splitlines()[1:]}
    _, rows = read_table(sweep_dir)
    for r in rows:
        assert sil[r["k"]] == r["silhouette"]


def test_silhouette_kmin_guard(blob_csv):
    assert main(["silhouette", "--input", str(blob_csv), "--label-col", "label",
                 "--kmin", "1", "--kmax", "2"]) == 2


# --------------------------------------------------------------- agreement


def write_solution(path, labels):
    path.write_text("case\tlabel\n" + "".join(f"{i + 1}\t{l}\n" for i, l in enumerate(labels)))


def test_agreement_identical_files(tmp_path, capsys):
    sol = tmp_path / "a.tsv"
    write_solution(sol, [1, 2, 1, 2, 1])
    assert main(["agreement", "--a", str(sol), "--b", str(sol)]) == 0
    report = json.loads(capsys.readouterr().out)
    assert report["a_vs_b"] == {"crand": 1.0, "fraction_matched": 1.0,
                                "kappa": 1.0, "rand": 1.0}


def test_agreement_label_flip_absorbed(tmp_path, capsys):
    a, b = tmp_path / "a.tsv", tmp_path / "b.tsv"
    write_solution(a, [1, 1, 2, 2])
    write_solution(b, [2, 2, 1, 1])
    assert main(["agreement", "--a", str(a), "--b", str(b)]) == 0
    assert json.loads(capsys.readouterr().out)["a_vs_b"]["fraction_matched"] == 1.0


def test_agreement_failure_codes(tmp_path, capsys):
    csv = tmp_path / "d.csv"
    csv.write_text("x,truth\n" + "".join(f"{i},{'A' if i < 4 else 'B'}\n" for i in range(8)))
    a, b = tmp_path / "a.tsv", tmp_path / "b.tsv"
    write_solution(a, [1, 1, 1, 1, 2, 2, 2, 1])   # one A-error on the last case
    write_solution(b, [2, 2, 2, 1, 1, 1, 1, 1])   # flipped labels, one B-error on case 4
    codes = tmp_path / "codes.tsv"
    assert main([
        "agreement", "--a", str(a), "--b", str(b),
        "--input", str(csv), "--label-col", "truth", "--cases-out", str(codes),
    ]) == 0
    report = json.loads(capsys.readouterr().out)
    counts = report["failure_counts"]
    assert counts == {"o": 6, "s": 1, "t": 1, "x": 0}
    n = sum(counts.values())
    assert report["a_vs_truth"]["fraction_matched"] == (counts["o"] + counts["t"]) / n
    assert report["b_vs_truth"]["fraction_matched"] == (counts["o"] + counts["s"]) / n
    lines = codes.read_text().splitlines()
    assert lines[0] == "case\ttruth\ta\tb\tcode"
    assert [ln.split("\t")[-1] for ln in lines[1:]].count("o") == 6


def test_agreement_length_mismatch_exit_3(tmp_path):
    a, b = tmp_path / "a.tsv", tmp_path / "b.tsv"
    write_solution(a, [1, 2, 1])
    write_solution(b, [1, 2])
    assert main(["agreement", "--a", str(a), "--b", str(b)]) == 3


def test_agreement_needs_comparator(tmp_path):
    a = tmp_path / "a.tsv"
    write_solution(a, [1, 2])
    assert main(["agreement", "--a", str(a)]) == 2


# ------------------------------------------------------------ validate-null


def test_validate_null_outputs(blob_csv, tmp_path, capsys):
    out = tmp_path / "vn"
    assert main([
        "validate-null", "--input", str(blob_csv), "--label-col", "label",
        "--k", "3", "--base", "kmeans", "--resamples", "30", "--draws", "9",
        "--seed", "3", "--out", str(out),
    ]) == 0
    names = ["null_pairs", "resample_pairs", "standard_reference", "ensemble_reference"]
    for name in names:
        body = (out / f"{name}.tsv").read_text().splitlines()
        assert body[0] == name
    summary = json.loads((out / "summary.json").read_text())
    for name in names:
        assert 0.0 <= summary[name]["median"] <= 1.0
    # clean separated blobs: structure beats the no-structure baseline
    assert summary["null_pairs"]["median"] < summary["resample_pairs"]["median"]
    assert "medians:" in capsys.readouterr().out


def test_validate_null_two_draws_single_pair(blob_csv, tmp_path):
    out = tmp_path / "vn2"
    assert main([
        "validate-null", "--input", str(blob_csv), "--label-col", "label",
        "--k", "3", "--base", "kmeans", "--resamples", "30", "--draws", "2",
        "--seed", "3", "--out", str(out),
    ]) == 0
    summary = json.loads((out / "summary.json").read_text())
    assert summary["null_pairs"]["count"] == 1
    assert summary["resample_pairs"]["count"] == 1
    assert summary["null_pairs"]["min"] == summary["null_pairs"]["max"]
