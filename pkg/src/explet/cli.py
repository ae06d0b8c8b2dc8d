"""Command-line interface.

Subcommands mirror the pipeline stages; `run` drives a full
cross-validated experiment from a key=value config file. Exit codes:
0 ok, 2 config error, 3 data error, 4 numerical failure.
"""

import argparse
import sys
import tempfile
from pathlib import Path

from . import __version__
from . import harness, io
from .errors import ConfigError, ExpletError
from .synth import SyntheticSpec, gen_synthetic


def _read_ids(path):
    ids = [line.strip() for line in Path(path).read_text().splitlines() if line.strip()]
    if not ids:
        raise ConfigError(f"id file {path} is empty")
    return ids


def _all_ids(index_rows):
    return sorted(r["video_id"] for r in index_rows)


def _labels_from_manifest(path):
    return {e.video_id: e.label for e in io.read_manifest(path)}


def _add_synth(sub):
    p = sub.add_parser("synth", help="generate a synthetic dataset")
    p.add_argument("--subjects", type=int, default=12)
    p.add_argument("--classes", type=int, default=6)
    p.add_argument("--clips-per", type=int, default=5)
    p.add_argument("--frames", type=int, default=10)
    p.add_argument("--warp", type=float, default=0.3)
    p.add_argument("--noise", type=float, default=0.02)
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--out", required=True)

    def cmd(args):
        spec = SyntheticSpec(n_subjects=args.subjects, n_classes=args.classes,
                             clips_per=args.clips_per, frames=args.frames,
                             warp=args.warp, noise=args.noise, seed=args.seed)
        entries = gen_synthetic(spec, args.out)
        print(f"wrote {len(entries)} clips and manifest.csv to {args.out}")

    p.set_defaults(func=cmd)


def _add_extract(sub):
    p = sub.add_parser("extract", help="dense descriptors + PCA + loc augmentation")
    p.add_argument("--manifest", required=True)
    p.add_argument("--desc", choices=["sift", "hog"], default="sift")
    p.add_argument("--patch", type=int, default=24)
    p.add_argument("--stride-frac", type=float, default=0.5)
    p.add_argument("--stride-t", type=int, default=1)
    p.add_argument("--pca-dim", type=int, default=64)
    p.add_argument("--train-ids", help="file of training video ids (PCA scope); default all")
    p.add_argument("--out", required=True)

    def cmd(args):
        out = Path(args.out)
        raw = out / "_raw"
        harness.stage_extract_raw(args.manifest, raw, args.desc, args.patch,
                                  args.stride_frac, args.stride_t)
        rows = io.read_feature_index(raw)
        train = _read_ids(args.train_ids) if args.train_ids else _all_ids(rows)
        harness.stage_extract(raw, out, args.pca_dim, train)
        print(f"extracted {len(rows)} clips to {out}")

    p.set_defaults(func=cmd)


def _add_train_umm(sub):
    p = sub.add_parser("train-umm", help="train the mixture over pooled features")
    p.add_argument("--features", required=True)
    p.add_argument("--K", type=int, default=64)
    p.add_argument("--cov", choices=["iso", "diag"], default="iso")
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--max-samples", type=int, default=100_000)
    p.add_argument("--iters", type=int, default=200)
    p.add_argument("--tol", type=float, default=1e-6)
    p.add_argument("--train-ids")
    p.add_argument("--out", required=True)

    def cmd(args):
        rows = io.read_feature_index(args.features)
        train = _read_ids(args.train_ids) if args.train_ids else _all_ids(rows)
        stats = harness.stage_train_umm(args.features, args.out, args.K, args.cov,
                                        args.seed, train, max_samples=args.max_samples,
                                        max_iters=args.iters, tol=args.tol)
        print(f"trained K={args.K} mixture -> {args.out} "
              f"({stats['em_iters_run']} EM iterations)")

    p.set_defaults(func=cmd)


def _add_fit(sub):
    p = sub.add_parser("fit", help="align clips to the mode bank")
    p.add_argument("--features", required=True)
    p.add_argument("--umm", help="mixture file (soft/hard modes)")
    p.add_argument("--mode", choices=["soft", "hard", "rigid"], default="soft")
    p.add_argument("--T", type=int, default=64)
    p.add_argument("--K", type=int, help="mode count for rigid blocking")
    p.add_argument("--out", required=True)

    def cmd(args):
        if args.mode in ("soft", "hard") and not args.umm:
            raise ConfigError(f"--mode {args.mode} needs --umm")
        harness.stage_fit(args.features, args.out, args.mode, umm_path=args.umm,
                          T=args.T, K=args.K)
        print(f"aligned clips -> {args.out}")

    p.set_defaults(func=cmd)


def _add_encode(sub):
    p = sub.add_parser("encode", help="covariance + log map + shared PCA")
    p.add_argument("--aligned", required=True)
    p.add_argument("--umm", help="optional consistency check against the mixture")
    p.add_argument("--energy", type=float)
    p.add_argument("--dim", type=int)
    p.add_argument("--vec", choices=["full", "tri"], default="full")
    p.add_argument("--cov-with-loc", action="store_true")
    p.add_argument("--train-ids")
    p.add_argument("--out", required=True)

    def cmd(args):
        if (args.energy is None) == (args.dim is None):
            raise ConfigError("specify exactly one of --energy / --dim")
        out = Path(args.out)
        logvecs = out / "_logvecs"
        harness.stage_logvecs(args.aligned, logvecs, vec_kind=args.vec,
                              use_loc=args.cov_with_loc, umm_path=args.umm)
        rows = io.read_aligned_index(args.aligned)
        train = _read_ids(args.train_ids) if args.train_ids else _all_ids(rows)
        stats = harness.stage_encode(logvecs, out, train,
                                     energy=args.energy, dim=args.dim)
        print(f"encoded -> {args.out} (dim {stats['reduced_dim']})")

    p.set_defaults(func=cmd)


def _add_encode_fv(sub):
    p = sub.add_parser("encode-fv", help="Fisher vector baseline encoding")
    p.add_argument("--features", required=True)
    p.add_argument("--umm", required=True)
    p.add_argument("--fv-with-loc", action="store_true")
    p.add_argument("--out", required=True)

    def cmd(args):
        stats = harness.stage_encode_fv(args.features, args.umm, args.out,
                                        with_loc=args.fv_with_loc)
        print(f"encoded Fisher vectors -> {args.out} (dim {stats['fv_dim']})")

    p.set_defaults(func=cmd)


def _add_train_embed(sub):
    p = sub.add_parser("train-embed", help="discriminant graph embedding")
    p.add_argument("--xlt", required=True)
    p.add_argument("--labels", help="manifest.csv supplying labels; default archive index")
    p.add_argument("--dim", type=int, default=256)
    p.add_argument("--train-ids")
    p.add_argument("--out", required=True)

    def cmd(args):
        rows = harness._read_vec_index(args.xlt)
        train = _read_ids(args.train_ids) if args.train_ids else _all_ids(rows)
        labels = _labels_from_manifest(args.labels) if args.labels else None
        stats = harness.stage_train_embed(args.xlt, args.out, args.dim, train,
                                          labels_by_id=labels)
        print(f"trained embedding -> {args.out} (dim {stats['embed_dim']})")

    p.set_defaults(func=cmd)


def _add_apply_embed(sub):
    p = sub.add_parser("apply-embed", help="project an archive through an embedding")
    p.add_argument("--xlt", required=True)
    p.add_argument("--emb", required=True)
    p.add_argument("--out", required=True)

    def cmd(args):
        harness.stage_apply_embed(args.xlt, args.emb, args.out)
        print(f"embedded vectors -> {args.out}")

    p.set_defaults(func=cmd)


def _add_train_svm(sub):
    p = sub.add_parser("train-svm", help="one-vs-rest linear SVM")
    p.add_argument("--vecs", required=True)
    p.add_argument("--labels", help="manifest.csv supplying labels; default archive index")
    p.add_argument("--C", type=float, default=1.0)
    p.add_argument("--no-norm", action="store_true",
                   help="skip per-video L2 normalization")
    p.add_argument("--epochs", type=int, default=1000)
    p.add_argument("--gap-tol", type=float, default=1e-3)
    p.add_argument("--train-ids")
    p.add_argument("--out", required=True)

    def cmd(args):
        rows = harness._read_vec_index(args.vecs)
        train = _read_ids(args.train_ids) if args.train_ids else _all_ids(rows)
        labels = _labels_from_manifest(args.labels) if args.labels else None
        harness.stage_train_svm(args.vecs, args.out, train, C=args.C,
                                normalize=not args.no_norm, max_epochs=args.epochs,
                                gap_rel_tol=args.gap_tol, labels_by_id=labels)
        print(f"trained svm -> {args.out}")

    p.set_defaults(func=cmd)


def _add_predict(sub):
    p = sub.add_parser("predict", help="classify vectors with a trained SVM")
    p.add_argument("--vecs", required=True)
    p.add_argument("--svm", required=True)
    p.add_argument("--ids", help="file of ids to predict; default all in archive")
    p.add_argument("--out", required=True)

    def cmd(args):
        rows = harness._read_vec_index(args.vecs)
        ids = _read_ids(args.ids) if args.ids else _all_ids(rows)
        preds = harness.stage_predict(args.vecs, args.svm, ids)
        with open(args.out, "w") as fh:
            fh.write("video_id,pred\n")
            for vid in sorted(preds):
                fh.write(f"{vid},{preds[vid]}\n")
        print(f"wrote {len(preds)} predictions -> {args.out}")

    p.set_defaults(func=cmd)


def _add_run(sub):
    p = sub.add_parser("run", help="full cross-validated pipeline run")
    p.add_argument("--config", required=True)
    p.add_argument("--variant", choices=list(harness.VARIANTS), default="explet")
    p.add_argument("--out", required=True)
    p.add_argument("--work", help="stage cache directory (default: temp)")
    p.add_argument("--set", dest="sets", action="append", metavar="KEY=VALUE",
                   help="override a config entry (repeatable)")

    def cmd(args):
        cfg = harness.apply_overrides(harness.parse_config(args.config), args.sets)
        if args.work:
            report = harness.run_pipeline(cfg, args.variant, args.out, args.work)
        else:
            with tempfile.TemporaryDirectory(prefix="explet-work-") as work:
                report = harness.run_pipeline(cfg, args.variant, args.out, work)
        print(f"{args.variant}: acc {report.acc:.2f}  macc {report.macc:.2f}  "
              f"report -> {args.out}")

    p.set_defaults(func=cmd)


def build_parser():
    parser = argparse.ArgumentParser(
        prog="explet",
        description="Covariance pooling over GMM-aligned spatio-temporal features")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for add in (_add_synth, _add_extract, _add_train_umm, _add_fit, _add_encode,
                _add_encode_fv, _add_train_embed, _add_apply_embed,
                _add_train_svm, _add_predict, _add_run):
        add(sub)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args.func(args)
    except ExpletError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
