"""Command-line pipeline: noun selection, counterpart construction,
training-free or distillation-based clustering, evaluation, zero-shot
classification, and hyperparameter sweeps.

Artifacts land in a run directory as plain files; every structured artifact
embeds the resolved-config hash, and binary artifacts are covered by the
run's config.json. Exit codes: 0 success, 2 ParameterError, 3 FormatError,
4 DataError, 5 DimensionError, 6 NormalizationError, 7 SelectionError,
8 TrainingDiverged, 9 other pipeline error, 1 unexpected failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from dataclasses import asdict, dataclass, replace

EXIT_CODES = {
    "ParameterError": 2,
    "FormatError": 3,
    "DataError": 4,
    "DimensionError": 5,
    "NormalizationError": 6,
    "SelectionError": 7,
    "TrainingDiverged": 8,
    "TacError": 9,
}

SWEEP_AXES = ("compact_cluster_size", "gamma", "retrieval_tau",
              "n_neighbors", "distill_tau", "alpha")

METRIC_FIELD_ORDER = ("nmi", "acc", "ari", "n", "k_pred", "k_true",
                      "seed", "config_hash", "timestamp")


@dataclass
class RunConfig:
    """Fully resolved settings for one run; hashed into every artifact."""

    manifest: str
    mode: str
    out_dir: str
    # text-space construction
    compact_cluster_size: int = 300
    centers_per_class: int = 3
    k_centers: int | None = None       # explicit semantic-center count (--k)
    gamma: int = 5
    retrieval_tau: float = 0.005
    classify_tau: float | None = None
    renormalize_halves: bool = True
    # k-means
    max_iter: int = 300
    tol: float = 1e-6
    n_init: int = 10
    # distillation
    n_neighbors: int = 50
    distill_tau: float = 0.5
    alpha: float = 5.0
    epochs: int = 20
    batch_size: int = 512
    lr: float = 1e-3
    hidden: int | None = None
    use_dis: bool = True
    use_con: bool = True
    use_bal: bool = True
    graph_cache: str | None = None
    # zero-shot
    clip_tau: float = 0.01
    seed: int = 0

    def config_hash(self) -> str:
        d = asdict(self)
        d.pop("out_dir")
        d["manifest"] = os.path.abspath(d["manifest"])
        blob = json.dumps(d, sort_keys=True)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


LARGE_K_PRESET = dict(distill_tau=5.0, batch_size=8192, epochs=100)


def _add_common(p: argparse.ArgumentParser, manifest: bool = True) -> None:
    if manifest:
        p.add_argument("--manifest", required=True, help="dataset manifest file")
    p.add_argument("--out-dir", default=None,
                   help="run directory (default ./tac_runs/<mode>; "
                        "env TAC_OUT_DIR overrides)")
    p.add_argument("--seed", type=int, default=0)


def _add_textspace(p: argparse.ArgumentParser) -> None:
    p.add_argument("--compact-cluster-size", type=int, default=300,
                   help="expected images per semantic center")
    p.add_argument("--centers-per-class", type=int, default=3)
    p.add_argument("--k", type=int, default=None, dest="k_centers",
                   help="explicit semantic-center count")
    p.add_argument("--k-auto", action="store_true",
                   help="estimate the center count from corpus size (default)")
    p.add_argument("--gamma", type=int, default=5,
                   help="discriminative nouns kept per center")
    p.add_argument("--retrieval-tau", type=float, default=0.005,
                   help="softness of counterpart retrieval")
    p.add_argument("--classify-tau", type=float, default=None,
                   help="optional temperature for noun classification "
                        "(default: untempered)")
    p.add_argument("--no-renormalize-halves", action="store_true",
                   help="concatenate raw halves in the training-free route")
    p.add_argument("--max-iter", type=int, default=300)
    p.add_argument("--tol", type=float, default=1e-6)
    p.add_argument("--n-init", type=int, default=10,
                   help="k-means restarts (lowest inertia wins)")


def _add_distill(p: argparse.ArgumentParser) -> None:
    p.add_argument("--n-neighbors", type=int, default=50)
    p.add_argument("--distill-tau", type=float, default=0.5)
    p.add_argument("--alpha", type=float, default=5.0)
    p.add_argument("--epochs", type=int, default=20)
    p.add_argument("--batch-size", type=int, default=512)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--hidden", type=int, default=None,
                   help="hidden width of the cluster heads (default: input dim)")
    p.add_argument("--no-dis-loss", action="store_true")
    p.add_argument("--no-con-loss", action="store_true")
    p.add_argument("--no-bal-loss", action="store_true")
    p.add_argument("--graph-cache", default=None,
                   help="path prefix for caching neighbor graphs")
    p.add_argument("--preset", choices=["large-k"], default=None,
                   help="large-K protocol: distill-tau 5.0, batch 8192, "
                        "100 epochs")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="tac",
        description="Externally guided clustering of frozen image embeddings "
                    "via a discriminative noun space.",
        epilog="Metric files list fields in the order: "
               + ", ".join(METRIC_FIELD_ORDER)
               + ". Exit codes: 0 ok, 2 parameter, 3 format, 4 data, "
                 "5 dimension, 6 normalization, 7 selection, 8 diverged, "
                 "9 other, 1 unexpected.")
    sub = p.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("select-nouns", help="write the per-center noun report")
    _add_common(sp)
    _add_textspace(sp)

    sp = sub.add_parser("counterpart", help="build and dump text counterparts")
    _add_common(sp)
    _add_textspace(sp)

    sp = sub.add_parser("cluster", help="cluster images (training-free or trained)")
    _add_common(sp)
    _add_textspace(sp)
    _add_distill(sp)
    sp.add_argument("--mode", choices=["notrain", "train"], default="notrain")

    sp = sub.add_parser("eval", help="score a prediction file against labels")
    _add_common(sp, manifest=False)
    sp.add_argument("--pred", required=True, help="newline-delimited assignments")
    sp.add_argument("--labels", required=True, help="newline-delimited labels")

    sp = sub.add_parser("zeroshot", help="classify by class-name embeddings")
    _add_common(sp)
    sp.add_argument("--clip-tau", type=float, default=0.01,
                    help="softmax temperature of the embedding backbone")

    sp = sub.add_parser("sweep", help="one full run per value of one axis")
    _add_common(sp)
    _add_textspace(sp)
    _add_distill(sp)
    sp.add_argument("--mode", choices=["notrain", "train"], default="notrain")
    sp.add_argument("--axis", required=True,
                    help="one of: " + ", ".join(SWEEP_AXES))
    sp.add_argument("--values", required=True,
                    help="comma-separated values for the axis")
    return p


def _config_from_args(args: argparse.Namespace, mode: str) -> RunConfig:
    out_dir = os.environ.get("TAC_OUT_DIR") or args.out_dir \
        or os.path.join("tac_runs", mode)
    cfg = RunConfig(
        manifest=getattr(args, "manifest", ""),
        mode=mode,
        out_dir=out_dir,
        seed=args.seed,
    )
    for name in ("compact_cluster_size", "centers_per_class", "k_centers",
                 "gamma", "retrieval_tau", "classify_tau", "max_iter", "tol",
                 "n_init", "n_neighbors", "distill_tau", "alpha", "epochs",
                 "batch_size", "lr", "hidden", "graph_cache", "clip_tau"):
        if hasattr(args, name):
            cfg = replace(cfg, **{name: getattr(args, name)})
    if getattr(args, "no_renormalize_halves", False):
        cfg = replace(cfg, renormalize_halves=False)
    if getattr(args, "no_dis_loss", False):
        cfg = replace(cfg, use_dis=False)
    if getattr(args, "no_con_loss", False):
        cfg = replace(cfg, use_con=False)
    if getattr(args, "no_bal_loss", False):
        cfg = replace(cfg, use_bal=False)
    if getattr(args, "preset", None) == "large-k":
        cfg = replace(cfg, **LARGE_K_PRESET)
    return cfg


class _Stage:
    """Prefix errors escaping a pipeline stage with the stage name."""

    def __init__(self, name: str):
        self.name = name

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        if exc is not None and isinstance(exc, Exception):
            exc.args = (f"[stage:{self.name}] {exc}",) + exc.args[1:]
        return False


def _now() -> str:
    import datetime
    return datetime.datetime.now(datetime.timezone.utc).isoformat(timespec="seconds")


def _write_config(cfg: RunConfig) -> str:
    os.makedirs(cfg.out_dir, exist_ok=True)
    h = cfg.config_hash()
    doc = asdict(cfg)
    doc["config_hash"] = h
    with open(os.path.join(cfg.out_dir, "config.json"), "w") as f:
        json.dump(doc, f, indent=2, sort_keys=True)
        f.write("\n")
    return h


def _cluster_entropy(assignment) -> float:
    import numpy as np
    counts = np.bincount(np.asarray(assignment))
    p = counts[counts > 0] / counts.sum()
    return float(-(p * np.log(p)).sum())


def _semantic_centers(images, cfg: RunConfig, target_k: int):
    from .core import RngState, STREAM_KMEANS_INIT
    from .kmeans import GranularityConfig, estimate_k, kmeans_fit

    gran = GranularityConfig(compact_cluster_size=cfg.compact_cluster_size,
                             centers_per_class=cfg.centers_per_class)
    k = cfg.k_centers or estimate_k(images.shape[0], target_k, gran)
    rng = RngState(cfg.seed, STREAM_KMEANS_INIT)
    result = kmeans_fit(images, k, rng, max_iter=cfg.max_iter,
                        tol=cfg.tol, n_init=cfg.n_init)
    return result.centers


def _build_text_space(cfg: RunConfig):
    """Stages shared by every pipeline mode up to counterpart construction."""
    from . import store, textspace

    with _Stage("load"):
        manifest = store.load_manifest(cfg.manifest)
        images = store.load_embeddings(manifest.image_path, normalize=True)
        vocab = store.load_vocabulary(manifest.noun_text_path,
                                      manifest.noun_embedding_path)
        labels = None
        if manifest.label_path:
            labels = store.load_labels(manifest.label_path, images.shape[0])
    with _Stage("centers"):
        centers = _semantic_centers(images, cfg, manifest.k)
    with _Stage("select-nouns"):
        probs = textspace.classify_nouns(vocab, centers, tau=cfg.classify_tau)
        sel = textspace.select_nouns(probs, cfg.gamma)
    return manifest, images, vocab, labels, sel


def _write_selection(cfg: RunConfig, h: str, sel, vocab) -> None:
    from .textspace import selection_report
    path = os.path.join(cfg.out_dir, "selection.tsv")
    with open(path, "w", encoding="utf-8") as f:
        f.write(f"# config_hash={h}\n")
        f.write(selection_report(sel, vocab))


def _write_assignments(cfg: RunConfig, assignment) -> str:
    path = os.path.join(cfg.out_dir, "assignments.txt")
    with open(path, "w") as f:
        for a in assignment:
            f.write(f"{int(a)}\n")
    return path


def _report(cfg: RunConfig, h: str, assignment, labels, warn_missing=True):
    from .metrics import evaluate
    if labels is None:
        if warn_missing:
            print("warning: manifest has no labels; writing assignments only",
                  file=sys.stderr)
        return None
    rep = evaluate(assignment, labels, seed=cfg.seed, config_hash=h,
                   timestamp=_now())
    rep.extra["cluster_entropy"] = f"{_cluster_entropy(assignment):.6f}"
    rep.extra["mode"] = cfg.mode
    with open(os.path.join(cfg.out_dir, "metrics.txt"), "w") as f:
        f.write(rep.to_text())
    with open(os.path.join(cfg.out_dir, "metrics.csv"), "w") as f:
        f.write(rep.csv_header() + "\n" + rep.to_csv_row() + "\n")
    return rep


def cmd_select_nouns(cfg: RunConfig):
    h = _write_config(cfg)
    manifest, images, vocab, labels, sel = _build_text_space(cfg)
    _write_selection(cfg, h, sel, vocab)
    print(f"{len(sel)} nouns selected across "
          f"{len(sel.per_center)} centers -> {cfg.out_dir}/selection.tsv")
    return None


def cmd_counterpart(cfg: RunConfig):
    from . import store, textspace
    h = _write_config(cfg)
    manifest, images, vocab, labels, sel = _build_text_space(cfg)
    _write_selection(cfg, h, sel, vocab)
    with _Stage("counterpart"):
        tc = textspace.build_counterparts(images, vocab, sel,
                                          tau=cfg.retrieval_tau)
    store.write_embeddings(os.path.join(cfg.out_dir, "counterparts.tace"),
                           tc.matrix)
    print(f"counterparts written -> {cfg.out_dir}/counterparts.tace")
    return None


def cmd_cluster(cfg: RunConfig):
    from . import store, textspace
    from .core import RngState, STREAM_KMEANS_INIT

    h = _write_config(cfg)
    manifest, images, vocab, labels, sel = _build_text_space(cfg)
    _write_selection(cfg, h, sel, vocab)
    with _Stage("counterpart"):
        tc = textspace.build_counterparts(images, vocab, sel,
                                          tau=cfg.retrieval_tau)
    store.write_embeddings(os.path.join(cfg.out_dir, "counterparts.tace"),
                           tc.matrix)

    if cfg.mode == "notrain":
        with _Stage("cluster"):
            rng = RngState(cfg.seed, STREAM_KMEANS_INIT + 100)
            assignment = textspace.cluster_no_train(
                images, tc, manifest.k, rng, max_iter=cfg.max_iter,
                tol=cfg.tol, n_init=cfg.n_init,
                renormalize=cfg.renormalize_halves)
    else:
        assignment = _train_and_predict(cfg, images, tc, manifest.k)

    _write_assignments(cfg, assignment)
    rep = _report(cfg, h, assignment, labels)
    if rep is not None:
        print(rep.to_text(), end="")
    return rep


def _train_and_predict(cfg: RunConfig, images, tc, k):
    from . import distill, neighbors

    with _Stage("graphs"):
        g_img, g_txt = _graphs(cfg, images, tc.matrix)
    with _Stage("train"):
        dcfg = distill.DistillConfig(
            tau_hat=cfg.distill_tau, alpha=cfg.alpha,
            n_neighbors=cfg.n_neighbors, batch_size=cfg.batch_size,
            epochs=cfg.epochs, lr=cfg.lr, seed=cfg.seed, hidden=cfg.hidden,
            use_dis=cfg.use_dis, use_con=cfg.use_con, use_bal=cfg.use_bal)
        params_f, params_g, history = distill.train(
            images, tc, (g_img, g_txt), k, dcfg)
    distill.save_checkpoint(os.path.join(cfg.out_dir, "checkpoint.bin"),
                            params_f, params_g, step=len(history))
    with open(os.path.join(cfg.out_dir, "loss.csv"), "w") as f:
        f.write(f"# config_hash={cfg.config_hash()}\n")
        f.write(",".join(distill.LossBreakdown.CSV_FIELDS) + "\n")
        for i, b in enumerate(history):
            f.write(f"{i},{b.dis:.10g},{b.con:.10g},{b.bal:.10g},{b.total:.10g}\n")
    with _Stage("predict"):
        return distill.predict(params_f, images)


def _graphs(cfg: RunConfig, images, counterparts):
    from . import neighbors
    if cfg.graph_cache:
        img_path = cfg.graph_cache + ".img.graph"
        txt_path = cfg.graph_cache + ".txt.graph"
        if os.path.exists(img_path) and os.path.exists(txt_path):
            return neighbors.load_graph(img_path), neighbors.load_graph(txt_path)
    g_img = neighbors.build_graph(images, cfg.n_neighbors)
    g_txt = neighbors.build_graph(counterparts, cfg.n_neighbors)
    if cfg.graph_cache:
        neighbors.save_graph(cfg.graph_cache + ".img.graph", g_img)
        neighbors.save_graph(cfg.graph_cache + ".txt.graph", g_txt)
    return g_img, g_txt


def cmd_eval(cfg: RunConfig, pred_path: str, label_path: str):
    from .store import load_labels
    h = _write_config(cfg)
    with _Stage("load"):
        with open(pred_path) as f:
            n = sum(1 for line in f if line.strip())
        pred = load_labels(pred_path, n)
        truth = load_labels(label_path, n)
    rep = _report(cfg, h, pred, truth)
    print(rep.to_text(), end="")
    return rep


def cmd_zeroshot(cfg: RunConfig):
    import numpy as np
    from . import store, textspace
    from .errors import ParameterError

    h = _write_config(cfg)
    with _Stage("load"):
        manifest = store.load_manifest(cfg.manifest)
        images = store.load_embeddings(manifest.image_path, normalize=True)
        vocab = store.load_vocabulary(manifest.noun_text_path,
                                      manifest.noun_embedding_path)
        labels = None
        if manifest.label_path:
            labels = store.load_labels(manifest.label_path, images.shape[0])
        if len(vocab) != manifest.k:
            raise ParameterError(
                f"zero-shot needs one class name per target cluster: "
                f"{len(vocab)} names vs K={manifest.k}")
    with _Stage("classify"):
        zs = textspace.ZeroShotConfig(clip_tau=cfg.clip_tau)
        probs = textspace.zero_shot_classify(images, vocab.embeddings, zs)
        assignment = np.argmax(probs, axis=1).astype(np.int64)
    _write_assignments(cfg, assignment)
    rep = _report(cfg, h, assignment, labels)
    if rep is not None:
        print(rep.to_text(), end="")
    return rep


def cmd_sweep(cfg: RunConfig, axis: str, values: list[str]):
    from .errors import ParameterError
    if axis not in SWEEP_AXES:
        raise ParameterError(f"unknown sweep axis {axis!r}; "
                             f"choose from {', '.join(SWEEP_AXES)}")
    if not values:
        raise ParameterError("sweep needs a non-empty value list")
    caster = int if axis in ("compact_cluster_size", "gamma", "n_neighbors") \
        else float
    os.makedirs(cfg.out_dir, exist_ok=True)
    sweep_path = os.path.join(cfg.out_dir, "sweep.csv")
    rows = []
    for run_id, raw in enumerate(values):
        sub = replace(cfg, **{axis: caster(raw)},
                      out_dir=os.path.join(cfg.out_dir, f"run{run_id:03d}"))
        rep = cmd_cluster(sub)
        fields = {"run_id": run_id, "axis": axis, "value": raw}
        if rep is not None:
            for name in METRIC_FIELD_ORDER:
                fields[name] = getattr(rep, name)
            fields.update(rep.extra)
        rows.append(fields)
    header = ["run_id", "axis", "value"] + list(METRIC_FIELD_ORDER) \
        + ["cluster_entropy", "mode"]
    with open(sweep_path, "w") as f:
        f.write(",".join(header) + "\n")
        for row in rows:
            f.write(",".join(str(row.get(k, "")) for k in header) + "\n")
    print(f"sweep written -> {sweep_path}")
    return None


def main(argv=None) -> int:
    threads = os.environ.get("TAC_THREADS")
    if threads:
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS",
                    "MKL_NUM_THREADS"):
            os.environ.setdefault(var, threads)

    args = build_parser().parse_args(argv)
    from .errors import TacError

    try:
        if args.command == "eval":
            cfg = _config_from_args(args, "eval")
            cmd_eval(cfg, args.pred, args.labels)
        elif args.command == "select-nouns":
            cmd_select_nouns(_config_from_args(args, "select-nouns"))
        elif args.command == "counterpart":
            cmd_counterpart(_config_from_args(args, "counterpart"))
        elif args.command == "cluster":
            cmd_cluster(_config_from_args(args, args.mode))
        elif args.command == "zeroshot":
            cmd_zeroshot(_config_from_args(args, "zeroshot"))
        elif args.command == "sweep":
            cfg = _config_from_args(args, args.mode)
            cmd_sweep(cfg, args.axis, [v for v in args.values.split(",") if v])
        return 0
    except TacError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CODES.get(type(e).__name__, EXIT_CODES["TacError"])
    except Exception as e:  # noqa: BLE001 - CLI boundary
        print(f"unexpected error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
