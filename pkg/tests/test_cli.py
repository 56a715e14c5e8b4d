import json
import os

import numpy as np
import pytest

from tac.cli import main
from tac.core import normalize_rows
from tac.store import load_embeddings, write_embeddings, write_labels, write_manifest

from conftest import noun_cloud_fixture, write_fixture_dataset


@pytest.fixture(scope="module")
def dataset(tmp_path_factory):
    root = tmp_path_factory.mktemp("dataset")
    images, labels, noun_names, noun_emb = noun_cloud_fixture()
    manifest = write_fixture_dataset(root, images, labels, noun_names,
                                     noun_emb, k=4)
    return manifest, images, labels


def test_cluster_notrain_accuracy(dataset, tmp_path, capsys):
    manifest, _, _ = dataset
    out = str(tmp_path / "run")
    rc = main(["cluster", "--manifest", manifest, "--out-dir", out, "--seed", "0"])
    assert rc == 0
    metrics = dict(line.strip().split(": ", 1)
                   for line in open(os.path.join(out, "metrics.txt")))
    assert float(metrics["acc"]) >= 0.95
    assert metrics["mode"] == "notrain"
    # assignment file: newline-delimited integers, one per row
    lines = open(os.path.join(out, "assignments.txt")).read().splitlines()
    assert len(lines) == 400
    assert all(line.isdigit() for line in lines)


def test_eval_identity(dataset, tmp_path, capsys):
    manifest, _, labels = dataset
    labels_path = os.path.join(os.path.dirname(manifest), "labels.txt")
    out = str(tmp_path / "eval")
    rc = main(["eval", "--pred", labels_path, "--labels", labels_path,
               "--out-dir", out])
    assert rc == 0
    text = capsys.readouterr().out
    assert "nmi: 1.0" in text and "acc: 1.0" in text and "ari: 1.0" in text


def test_missing_file_stage_tagged(tmp_path, capsys):
    manifest = tmp_path / "manifest.txt"
    write_manifest(str(manifest), name="ghost", images="missing.tace",
                   nouns="nouns.txt", k=2)
    rc = main(["cluster", "--manifest", str(manifest),
               "--out-dir", str(tmp_path / "out")])
    assert rc == 3  # FormatError
    err = capsys.readouterr().err
    assert "[stage:load]" in err


def test_select_nouns_report(dataset, tmp_path, capsys):
    manifest, _, _ = dataset
    out = str(tmp_path / "sel")
    rc = main(["select-nouns", "--manifest", manifest, "--out-dir", out,
               "--seed", "0"])
    assert rc == 0
    lines = open(os.path.join(out, "selection.tsv")).read().splitlines()
    assert lines[0].startswith("# config_hash=")
    assert lines[1] == "center\tnoun\tconfidence"
    assert len(lines) > 2
    # selected nouns should be dominated by the class clouds, not distractors
    names = [line.split("\t")[1] for line in lines[2:]]
    assert sum(name.startswith("class") for name in names) > len(names) * 0.7


def test_counterpart_output_loadable(dataset, tmp_path):
    manifest, images, _ = dataset
    out = str(tmp_path / "cp")
    rc = main(["counterpart", "--manifest", manifest, "--out-dir", out,
               "--seed", "0"])
    assert rc == 0
    tc = load_embeddings(os.path.join(out, "counterparts.tace"))
    assert tc.shape == images.shape
    np.testing.assert_allclose(np.linalg.norm(tc, axis=1),
                               np.ones(len(tc)), atol=1e-4)


def test_explicit_center_count(dataset, tmp_path):
    manifest, _, _ = dataset
    out = str(tmp_path / "k8")
    rc = main(["select-nouns", "--manifest", manifest, "--out-dir", out,
               "--seed", "0", "--k", "8"])
    assert rc == 0
    cfg = json.load(open(os.path.join(out, "config.json")))
    assert cfg["k_centers"] == 8


def test_zeroshot(tmp_path, capsys):
    rng = np.random.default_rng(0)
    d, k, n_per = 16, 4, 50
    frame, _ = np.linalg.qr(rng.normal(size=(d, k)))
    class_dirs = frame.T
    labels = np.repeat(np.arange(k), n_per)
    images = normalize_rows(class_dirs[labels] * 1.5
                            + 0.3 * rng.normal(size=(k * n_per, d)))
    class_texts = normalize_rows(class_dirs + 0.02 * rng.normal(size=(k, d)))
    write_embeddings(tmp_path / "images.tace", images.astype(np.float32))
    write_labels(tmp_path / "labels.txt", labels)
    (tmp_path / "classes.txt").write_text(
        "".join(f"class{i}\n" for i in range(k)))
    write_embeddings(tmp_path / "classes.tace", class_texts.astype(np.float32))
    manifest = tmp_path / "manifest.txt"
    write_manifest(str(manifest), name="zs", images="images.tace",
                   nouns="classes.txt", k=k, labels="labels.txt")
    out = str(tmp_path / "out")
    rc = main(["zeroshot", "--manifest", str(manifest), "--out-dir", out])
    assert rc == 0
    metrics = dict(line.strip().split(": ", 1)
                   for line in open(os.path.join(out, "metrics.txt")))
    assert float(metrics["acc"]) >= 0.95


def test_zeroshot_k_mismatch(dataset, tmp_path, capsys):
    manifest, _, _ = dataset  # 68 nouns != K=4
    rc = main(["zeroshot", "--manifest", manifest,
               "--out-dir", str(tmp_path / "out")])
    assert rc == 2


def test_sweep_gamma_rows(dataset, tmp_path):
    manifest, _, _ = dataset
    out = str(tmp_path / "sweep")
    rc = main(["sweep", "--manifest", manifest, "--axis", "gamma",
               "--values", "1,3,5,10", "--out-dir", out, "--seed", "0"])
    assert rc == 0
    lines = open(os.path.join(out, "sweep.csv")).read().splitlines()
    assert lines[0].startswith("run_id,axis,value")
    assert len(lines) == 5
    assert [line.split(",")[0] for line in lines[1:]] == ["0", "1", "2", "3"]
    assert all(line.split(",")[1] == "gamma" for line in lines[1:])


def test_sweep_empty_values(dataset, tmp_path, capsys):
    manifest, _, _ = dataset
    rc = main(["sweep", "--manifest", manifest, "--axis", "gamma",
               "--values", "", "--out-dir", str(tmp_path / "s")])
    assert rc == 2


def test_sweep_unknown_axis(dataset, tmp_path, capsys):
    manifest, _, _ = dataset
    rc = main(["sweep", "--manifest", manifest, "--axis", "bogus",
               "--values", "1,2", "--out-dir", str(tmp_path / "s")])
    assert rc == 2


def test_sweep_alpha_collapse_direction(dataset, tmp_path):
    # at the large-cluster temperature the balance term is what prevents
    # collapse; the alpha=0 run must end with lower cluster-size entropy
    manifest, _, _ = dataset
    out = str(tmp_path / "sweep")
    rc = main(["sweep", "--manifest", manifest, "--mode", "train",
               "--axis", "alpha", "--values", "0,5", "--out-dir", out,
               "--seed", "3", "--epochs", "25", "--hidden", "64",
               "--distill-tau", "5.0"])
    assert rc == 0
    lines = open(os.path.join(out, "sweep.csv")).read().splitlines()
    header = lines[0].split(",")
    col = header.index("cluster_entropy")
    ent0 = float(lines[1].split(",")[col])
    ent5 = float(lines[2].split(",")[col])
    assert ent0 < ent5


def test_train_determinism_byte_identical(dataset, tmp_path):
    manifest, _, _ = dataset
    outs = []
    for name in ("a", "b"):
        out = str(tmp_path / name)
        rc = main(["cluster", "--manifest", manifest, "--mode", "train",
                   "--out-dir", out, "--seed", "11", "--epochs", "10",
                   "--hidden", "32"])
        assert rc == 0
        outs.append(out)
    for artifact in ("assignments.txt", "loss.csv"):
        a = open(os.path.join(outs[0], artifact), "rb").read()
        b = open(os.path.join(outs[1], artifact), "rb").read()
        assert a == b, artifact


def test_artifacts_embed_config_hash(dataset, tmp_path):
    manifest, _, _ = dataset
    out = str(tmp_path / "run")
    rc = main(["cluster", "--manifest", manifest, "--mode", "train",
               "--out-dir", out, "--seed", "2", "--epochs", "2",
               "--hidden", "16"])
    assert rc == 0
    cfg = json.load(open(os.path.join(out, "config.json")))
    h = cfg["config_hash"]
    assert f"# config_hash={h}" in open(os.path.join(out, "loss.csv")).read()
    assert f"# config_hash={h}" in open(os.path.join(out, "selection.tsv")).read()
    assert f"config_hash: {h}" in open(os.path.join(out, "metrics.txt")).read()
    assert h in open(os.path.join(out, "metrics.csv")).read()
    assert os.path.exists(os.path.join(out, "checkpoint.bin"))


def test_out_dir_env_override(dataset, tmp_path, monkeypatch):
    manifest, _, _ = dataset
    env_out = str(tmp_path / "env_out")
    monkeypatch.setenv("TAC_OUT_DIR", env_out)
    rc = main(["select-nouns", "--manifest", manifest,
               "--out-dir", str(tmp_path / "ignored"), "--seed", "0"])
    assert rc == 0
    assert os.path.exists(os.path.join(env_out, "selection.tsv"))
    assert not os.path.exists(str(tmp_path / "ignored"))


def test_missing_labels_warns(tmp_path, capsys):
    images, labels, noun_names, noun_emb = noun_cloud_fixture(n=80)
    write_embeddings(tmp_path / "images.tace", images)
    with open(tmp_path / "nouns.txt", "w") as f:
        f.writelines(n + "\n" for n in noun_names)
    write_embeddings(tmp_path / "nouns.tace", noun_emb)
    manifest = tmp_path / "manifest.txt"
    write_manifest(str(manifest), name="unlabeled", images="images.tace",
                   nouns="nouns.txt", k=4)  # no labels
    out = str(tmp_path / "out")
    rc = main(["cluster", "--manifest", str(manifest), "--out-dir", out])
    assert rc == 0
    assert "warning" in capsys.readouterr().err.lower()
    assert os.path.exists(os.path.join(out, "assignments.txt"))
    assert not os.path.exists(os.path.join(out, "metrics.txt"))


def test_graph_cache_round_trip(dataset, tmp_path):
    manifest, _, _ = dataset
    cache = str(tmp_path / "cache")
    out1 = str(tmp_path / "r1")
    rc = main(["cluster", "--manifest", manifest, "--mode", "train",
               "--out-dir", out1, "--seed", "5", "--epochs", "2",
               "--hidden", "16", "--graph-cache", cache])
    assert rc == 0
    assert os.path.exists(cache + ".img.graph")
    out2 = str(tmp_path / "r2")
    rc = main(["cluster", "--manifest", manifest, "--mode", "train",
               "--out-dir", out2, "--seed", "5", "--epochs", "2",
               "--hidden", "16", "--graph-cache", cache])
    assert rc == 0
    a = open(os.path.join(out1, "assignments.txt"), "rb").read()
    b = open(os.path.join(out2, "assignments.txt"), "rb").read()
    assert a == b
