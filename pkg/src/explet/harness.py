"""End-to-end orchestration: folds, metrics, pipeline stages, reports.

Every pipeline stage is a file-to-file function; the CLI subcommands call
them directly and run_pipeline composes the very same functions per fold,
so a manual stage-by-stage run reproduces a pipeline run byte for byte.
Stage outputs land in a content-keyed work directory (parameters plus
training-id hash), which lets paired variants share everything upstream
of where they diverge. Reports carry no timestamps or absolute paths.
"""

import csv
import hashlib
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import io
from .classify import predict_batch, train_svm
from .embed import (EmbeddingModel, build_graphs, scatter_laplacians,
                    solve_projection)
from .errors import (ConfigError, DataError, MissingPrediction,
                     TooFewSubjects)
from .explets import build_explets, reduce_explets, vec_length
from .fv import encode_fv
from .stfeat import StmFeatureSet, augment_matrix, block_spec_for, extract_raw, fit_pca
from .stfeat import FrameSequence
from .umm import EmConfig, fit_hard, fit_soft, rigid_blocks, train_em


# --- cross-validation folds ---

@dataclass(frozen=True)
class CvProtocol:
    kind: str                 # "loso" | "kfold"
    folds: int = 10
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ("loso", "kfold"):
            raise ConfigError(f"unknown protocol {self.kind!r}")
        if self.kind == "kfold" and self.folds < 2:
            raise ConfigError("kfold needs folds >= 2")


def make_folds(entries, protocol):
    """Subject-disjoint (train_ids, test_ids) splits.

    LOSO gives one fold per subject; k-fold shuffles subjects with the
    protocol seed and splits them into k groups whose sizes differ by at
    most one subject.
    """
    by_subject = {}
    for e in entries:
        by_subject.setdefault(e.subject_id, []).append(e.video_id)
    subjects = sorted(by_subject)

    if protocol.kind == "loso":
        groups = [[s] for s in subjects]
    else:
        if len(subjects) < protocol.folds:
            raise TooFewSubjects(
                f"{len(subjects)} subjects < {protocol.folds} folds")
        order = list(subjects)
        rng = np.random.default_rng(np.random.SeedSequence(protocol.seed))
        rng.shuffle(order)
        groups = [list(g) for g in np.array_split(np.asarray(order, dtype=object),
                                                  protocol.folds)]

    folds = []
    for group in groups:
        test = sorted(v for s in group for v in by_subject[s])
        train = sorted(v for s in subjects if s not in set(group)
                       for v in by_subject[s])
        folds.append((train, test))
    return folds


# --- metrics ---

@dataclass
class EvalReport:
    classes: np.ndarray
    confusion: np.ndarray     # rows = true class, cols = predicted
    acc: float                # percent
    macc: float               # mean per-class recall, percent
    per_class_recall: dict
    ids: list
    y_true: np.ndarray
    y_pred: np.ndarray


def evaluate(predictions, truth, classes=None):
    """Score a prediction map {video_id: label} against (id, label) truth."""
    ids = sorted(t[0] for t in truth)
    truth_map = dict(truth)
    missing = [i for i in ids if i not in predictions]
    if missing:
        raise MissingPrediction(f"no prediction for {missing[:5]}")
    y_true = np.array([truth_map[i] for i in ids])
    y_pred = np.array([predictions[i] for i in ids])
    if classes is None:
        classes = np.unique(y_true)
    classes = np.asarray(sorted(classes))
    index = {c: i for i, c in enumerate(classes)}
    bad = [p for p in y_pred if p not in index]
    if bad:
        raise DataError(f"prediction label {bad[0]} outside class set")

    n = classes.size
    confusion = np.zeros((n, n), dtype=np.int64)
    for t, p in zip(y_true, y_pred):
        confusion[index[t], index[p]] += 1

    total = confusion.sum()
    acc = 100.0 * np.trace(confusion) / total
    recalls = {}
    for i, c in enumerate(classes):
        row = confusion[i].sum()
        if row > 0:
            recalls[int(c)] = 100.0 * confusion[i, i] / row
    macc = float(np.mean(list(recalls.values())))
    return EvalReport(classes=classes, confusion=confusion, acc=float(acc),
                      macc=macc, per_class_recall=recalls, ids=ids,
                      y_true=y_true, y_pred=y_pred)


# --- configuration ---

CONFIG_DEFAULTS = {
    "desc": "sift",
    "patch": "24",
    "stride_frac": "0.5",
    "stride_t": "1",
    "pca_dim": "64",
    "K": "64",
    "T": "64",
    "cov": "iso",
    "umm_scope": "train",
    "umm_max_samples": "100000",
    "em_iters": "200",
    "em_tol": "1e-6",
    "assign": "soft",
    "energy": "0.99",
    "dim": "256",
    "vec": "full",
    "cov_with_loc": "false",
    "fv_with_loc": "false",
    "C": "1.0",
    "norm": "true",
    "protocol": "loso",
    "folds": "10",
    "seed": "7",
    "parallel_folds": "1",
    "svm_epochs": "1000",
    "svm_gap_tol": "1e-3",
}

VARIANTS = ("explet", "dis-explet", "fv", "rigid")


def parse_config(path):
    """Flat key=value file; '#' starts a comment."""
    cfg = dict(CONFIG_DEFAULTS)
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    for lineno, line in enumerate(path.read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key=value, got {line!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        cfg[key] = value
    return cfg


def apply_overrides(cfg, sets):
    for item in sets or []:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        key, value = (s.strip() for s in item.split("=", 1))
        cfg[key] = value
    return cfg


def _as_bool(value, key):
    v = str(value).strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"config key {key}: expected boolean, got {value!r}")


def _cfg_int(cfg, key):
    try:
        return int(cfg[key])
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"config key {key}: bad integer {cfg.get(key)!r}") from exc


def _cfg_float(cfg, key):
    try:
        return float(cfg[key])
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"config key {key}: bad float {cfg.get(key)!r}") from exc


# --- stage plumbing ---

def _key_of(kind, params, *upstream):
    blob = json.dumps({"kind": kind, "params": params, "up": list(upstream)},
                      sort_keys=True)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _stage_dir(work, kind, key):
    return Path(work) / f"{kind}-{key}"


def _done(path):
    return (Path(path) / "DONE").is_file()


def _mark_done(path, stats=None):
    path = Path(path)
    with open(path / "stats.json", "w") as fh:
        json.dump(stats or {}, fh, sort_keys=True)
    (path / "DONE").write_text("ok\n")


def _load_stats(path):
    with open(Path(path) / "stats.json") as fh:
        return json.load(fh)


def resolve_clip_path(manifest_path, entry):
    p = Path(entry.path)
    return p if p.is_absolute() else Path(manifest_path).parent / p


# --- stages ---

def stage_extract_raw(manifest_path, out_dir, desc, patch, stride_frac, stride_t=1):
    """Raw (un-reduced, un-augmented) descriptors per clip; fold-independent."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    entries = io.read_manifest(manifest_path)
    spec = block_spec_for(desc, patch, stride_frac, stride_t)
    rows = []
    for e in sorted(entries, key=lambda e: e.video_id):
        frames = io.load_frames(resolve_clip_path(manifest_path, e))
        seq = FrameSequence(e.video_id, e.subject_id, e.label, frames)
        D, gi, counts = extract_raw(seq, spec, desc)
        fname = f"{e.video_id}.stmf"
        io.write_features(out_dir / fname, np.hstack([D, gi.astype(np.float64)]))
        rows.append({"video_id": e.video_id, "subject_id": e.subject_id,
                     "label": e.label, "count": D.shape[0], "d_total": D.shape[1],
                     "wstar": counts[0], "hstar": counts[1], "lstar": counts[2],
                     "file": fname})
    io.write_feature_index(out_dir, rows)
    return out_dir


def _read_raw(raw_dir, row):
    data = io.read_features(Path(raw_dir) / row["file"])
    D = data[:, :row["d_total"]]
    gi = data[:, row["d_total"]:].astype(np.int64)
    return D, gi


def stage_extract(raw_dir, out_dir, pca_dim, train_ids):
    """PCA-reduce raw descriptors on the training split and augment with loc."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = io.read_feature_index(raw_dir)
    by_id = {r["video_id"]: r for r in rows}
    train_ids = sorted(train_ids)
    missing = [i for i in train_ids if i not in by_id]
    if missing:
        raise DataError(f"train ids missing from raw features: {missing[:5]}")

    d_raw = rows[0]["d_total"]
    pca = None
    if pca_dim < d_raw:
        train_mat = np.vstack([_read_raw(raw_dir, by_id[i])[0] for i in train_ids])
        pca = fit_pca(train_mat, n_components=pca_dim)
        io.write_pca(out_dir / "pca.bin", pca)
        io.write_provenance(out_dir / "pca.bin", train_ids)

    out_rows = []
    for row in sorted(rows, key=lambda r: r["video_id"]):
        D, gi = _read_raw(raw_dir, row)
        A = pca.project(D) if pca is not None else D
        counts = (row["wstar"], row["hstar"], row["lstar"])
        F = augment_matrix(A, gi, counts)
        fname = f"{row['video_id']}.stmf"
        io.write_features(out_dir / fname, F)
        out_rows.append({**row, "d_total": F.shape[1], "file": fname})
    io.write_feature_index(out_dir, out_rows)
    return out_dir


def _load_stm(features_dir, row):
    F = io.read_features(Path(features_dir) / row["file"])
    return StmFeatureSet(video_id=row["video_id"], subject_id=row["subject_id"],
                         label=row["label"], features=F,
                         grid_counts=(row["wstar"], row["hstar"], row["lstar"]))


def stage_train_umm(features_dir, out_path, K, cov, seed, train_ids,
                    max_samples=100_000, max_iters=200, tol=1e-6):
    rows = {r["video_id"]: r for r in io.read_feature_index(features_dir)}
    train_ids = sorted(train_ids)
    pool = np.vstack([io.read_features(Path(features_dir) / rows[i]["file"])
                      for i in train_ids])
    model = train_em(pool, K, EmConfig(cov=cov, seed=seed, max_iters=max_iters,
                                       tol=tol, max_samples=max_samples))
    io.write_umm(out_path, model)
    io.write_provenance(out_path, train_ids)
    return {"em_iters_run": int(model.ll_history.size),
            "em_reseeds": int(model.n_reseeds),
            "final_ll": float(model.ll_history[-1])}


def stage_fit(features_dir, out_dir, mode, umm_path=None, T=None, K=None):
    """Align every clip: soft/hard need the mixture, rigid only needs K."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = io.read_feature_index(features_dir)
    model = io.read_umm(umm_path) if mode in ("soft", "hard") else None
    if mode == "rigid" and not K:
        raise ConfigError("rigid alignment needs K")
    out_rows = []
    for row in sorted(rows, key=lambda r: r["video_id"]):
        stm = _load_stm(features_dir, row)
        if mode == "soft":
            aligned = fit_soft(stm, model, T)
        elif mode == "hard":
            aligned = fit_hard(stm, model)
        elif mode == "rigid":
            aligned = rigid_blocks(stm, K)
        else:
            raise ConfigError(f"unknown fit mode {mode!r}")
        fname = f"{row['video_id']}.aln"
        io.write_aligned(out_dir / fname,
                         [(m.indices, m.log_probs) for m in aligned.modes])
        out_rows.append({"video_id": row["video_id"], "subject_id": row["subject_id"],
                         "label": row["label"], "K": aligned.K, "file": fname,
                         "features_file": str(Path(features_dir) / row["file"])})
    io.write_aligned_index(out_dir, out_rows)
    return out_dir


def _video_log_vecs(aligned_dir, row, features_rows, vec_kind, use_loc):
    from .umm import AlignedStm, LocalMode
    modes = io.read_aligned(Path(aligned_dir) / row["file"])
    frow = features_rows[row["video_id"]]
    F = io.read_features(row["features_file"])
    stm = StmFeatureSet(video_id=row["video_id"], subject_id=row["subject_id"],
                        label=row["label"], features=F,
                        grid_counts=(frow["wstar"], frow["hstar"], frow["lstar"]))
    aligned = AlignedStm(stm.video_id, stm.subject_id, stm.label,
                         [LocalMode(k, idx, lp) for k, (idx, lp) in enumerate(modes)])
    _, vecs, n_deg = build_explets(stm, aligned, use_loc=use_loc, vec_kind=vec_kind)
    return vecs, n_deg


def stage_logvecs(aligned_dir, out_dir, vec_kind="full", use_loc=False,
                  umm_path=None):
    """Covariance -> log map -> vectorize for every clip, cached as one matrix.

    This is the half of encoding that does not depend on the PCA target, so
    pipeline variants that differ only in the reduction (fixed dim vs energy
    fraction) share it. Vectors are stored float32.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = sorted(io.read_aligned_index(aligned_dir), key=lambda r: r["video_id"])
    K = rows[0]["K"]
    if umm_path is not None:
        model = io.read_umm(umm_path)
        if model.K != K:
            raise ConfigError(f"umm has K={model.K}, aligned archive K={K}")

    features_rows = {}
    for row in rows:
        fdir = Path(row["features_file"]).parent
        if row["video_id"] not in features_rows:
            for fr in io.read_feature_index(fdir):
                features_rows[fr["video_id"]] = fr

    n_degenerate = 0
    d_c = None
    blocks = []
    for row in rows:
        vecs, n_deg = _video_log_vecs(aligned_dir, row, features_rows,
                                      vec_kind, use_loc)
        blocks.append(vecs.astype(np.float32))
        n_degenerate += n_deg
        frow = features_rows[row["video_id"]]
        d_here = frow["d_total"] if use_loc else frow["d_total"] - 3
        d_c = d_here if d_c is None else d_c
    np.save(out_dir / "logvecs.npy", np.vstack(blocks))
    with open(out_dir / "meta.json", "w") as fh:
        json.dump({"K": K, "d_c": d_c, "vec_kind": vec_kind,
                   "use_loc": use_loc}, fh, sort_keys=True)
    _write_vec_index(out_dir, rows)
    return {"n_degenerate_modes": int(n_degenerate)}


def stage_encode(logvecs_dir, out_dir, train_ids, energy=None, dim=None):
    """Shared PCA over the training log-vectors; writes the XLT archive."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    logvecs_dir = Path(logvecs_dir)
    with open(logvecs_dir / "meta.json") as fh:
        meta = json.load(fh)
    K = meta["K"]
    rows = _read_vec_index(logvecs_dir)
    all_mat = np.load(logvecs_dir / "logvecs.npy").astype(np.float64)
    row_of = {row["video_id"]: n for n, row in enumerate(rows)}

    train_ids = sorted(train_ids)
    train_rows = np.concatenate([np.arange(row_of[i] * K, (row_of[i] + 1) * K)
                                 for i in train_ids])
    sym_dim = meta["d_c"] if meta["vec_kind"] == "full" else None
    pca, _ = reduce_explets(all_mat[train_rows], energy=energy,
                            n_components=dim, sym_dim=sym_dim)

    Z = pca.project(all_mat)
    del all_mat
    items = [(row["video_id"], Z[row_of[row["video_id"]] * K:
                                 (row_of[row["video_id"]] + 1) * K])
             for row in rows]
    io.write_xlt(out_dir / "explets.xlt", K, pca.dim_out, items)
    io.write_pca(out_dir / "pca.bin", pca)
    io.write_provenance(out_dir / "pca.bin", train_ids)
    _write_vec_index(out_dir, rows)
    return {"reduced_dim": int(pca.dim_out),
            "retained_energy": float(pca.retained_energy)}


def _write_vec_index(out_dir, rows):
    with open(Path(out_dir) / "index.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["video_id", "subject_id", "label"])
        for row in rows:
            writer.writerow([row["video_id"], row["subject_id"], row["label"]])


def stage_encode_fv(features_dir, umm_path, out_dir, with_loc=False):
    """Fisher vectors under the shared mixture (appearance dims by default)."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = sorted(io.read_feature_index(features_dir), key=lambda r: r["video_id"])
    model = io.read_umm(umm_path)
    if not with_loc:
        model = model.marginal(model.d - 3)
    items = []
    for row in rows:
        F = io.read_features(Path(features_dir) / row["file"])
        if not with_loc:
            F = F[:, :model.d]
        v = encode_fv(F, model)
        items.append((row["video_id"], v[None, :]))
    dim = items[0][1].shape[1]
    io.write_xlt(out_dir / "explets.xlt", 1, dim, items)
    prov = Path(str(umm_path) + ".prov")
    if prov.is_file():
        (out_dir / "explets.xlt.prov").write_text(prov.read_text())
    _write_vec_index(out_dir, rows)
    return {"fv_dim": int(dim)}


def _read_vec_index(dirpath):
    with open(Path(dirpath) / "index.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    for row in rows:
        row["label"] = int(row["label"])
    return rows


def stage_train_embed(xlt_dir, out_path, dim, train_ids, labels_by_id=None):
    """Graphs + Laplacian scatters + generalized eigensolve on the training split."""
    K, rdim, items = io.read_xlt(Path(xlt_dir) / "explets.xlt")
    by_id = dict(items)
    if labels_by_id is None:
        labels_by_id = {r["video_id"]: r["label"] for r in _read_vec_index(xlt_dir)}
    train_ids = sorted(train_ids)
    labels = [labels_by_id[i] for i in train_ids]

    # columns of X follow node index m = i*K + p
    X = np.vstack([by_id[i] for i in train_ids]).T
    graphs = build_graphs(labels, K)
    L_w, L_b = scatter_laplacians(graphs)
    l = min(dim, X.shape[0])
    eigvals, V = solve_projection(X, L_w, L_b, l)

    pca = io.read_pca(Path(xlt_dir) / "pca.bin")
    model = EmbeddingModel(pca=pca, V=V, eigvals=eigvals)
    io.write_embedding(out_path, model)
    io.write_provenance(out_path, train_ids)
    return {"embed_dim": int(l), "top_eigval": float(eigvals[0])}


def stage_apply_embed(xlt_dir, emb_path, out_dir):
    """Project every video's reduced expressionlets through V."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    K, rdim, items = io.read_xlt(Path(xlt_dir) / "explets.xlt")
    model = io.read_embedding(emb_path)
    if model.V.shape[0] != rdim:
        raise DataError(f"embedding expects dim {model.V.shape[0]}, archive has {rdim}")
    out_items = [(vid, arr @ model.V) for vid, arr in items]
    io.write_xlt(out_dir / "explets.xlt", K, model.V.shape[1], out_items)
    rows = _read_vec_index(xlt_dir)
    with open(out_dir / "index.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["video_id", "subject_id", "label"])
        for row in rows:
            writer.writerow([row["video_id"], row["subject_id"], row["label"]])
    return out_dir


def _flat_vectors(xlt_dir):
    """Archive rows flattened to one vector per video (mode-order concat)."""
    K, dim, items = io.read_xlt(Path(xlt_dir) / "explets.xlt")
    return {vid: arr.ravel() for vid, arr in items}


def stage_train_svm(vecs_dir, out_path, train_ids, C=1.0, normalize=True,
                    max_epochs=1000, gap_rel_tol=1e-3, labels_by_id=None):
    vecs = _flat_vectors(vecs_dir)
    if labels_by_id is None:
        labels_by_id = {r["video_id"]: r["label"] for r in _read_vec_index(vecs_dir)}
    train_ids = sorted(train_ids)
    X = np.vstack([vecs[i] for i in train_ids])
    y = np.array([labels_by_id[i] for i in train_ids])
    model = train_svm(X, y, C=C, normalize=normalize, max_epochs=max_epochs,
                      gap_rel_tol=gap_rel_tol)
    io.write_svm(out_path, model)
    io.write_provenance(out_path, train_ids)
    return {"n_classes": int(model.classes.size)}


def stage_predict(vecs_dir, svm_path, ids):
    vecs = _flat_vectors(vecs_dir)
    model = io.read_svm(svm_path)
    ids = sorted(ids)
    missing = [i for i in ids if i not in vecs]
    if missing:
        raise DataError(f"ids missing from vector archive: {missing[:5]}")
    X = np.vstack([vecs[i] for i in ids])
    preds = predict_batch(model, X)
    return dict(zip(ids, (int(p) for p in preds)))


def write_predictions_csv(path, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["video_id", "subject_id", "true", "pred"])
        for row in rows:
            writer.writerow(row)


# --- pipeline ---

def _fold_pipeline(cfg, variant, raw_dir, work, train_ids, test_ids):
    """All stages of one fold; returns (predictions, stats)."""
    train_hash = io.train_ids_hash(train_ids)
    stats = {}

    pca_dim = _cfg_int(cfg, "pca_dim")
    ex_key = _key_of("extract", {"pca_dim": pca_dim, "train": train_hash},
                     str(raw_dir))
    features = _stage_dir(work, "features", ex_key)
    if not _done(features):
        stage_extract(raw_dir, features, pca_dim, train_ids)
        _mark_done(features)

    K = _cfg_int(cfg, "K")
    seed = _cfg_int(cfg, "seed")
    vec_kind = cfg["vec"]
    use_loc = _as_bool(cfg["cov_with_loc"], "cov_with_loc")
    norm = _as_bool(cfg["norm"], "norm")
    C = _cfg_float(cfg, "C")
    svm_epochs = _cfg_int(cfg, "svm_epochs")
    svm_gap = _cfg_float(cfg, "svm_gap_tol")

    def train_umm_stage():
        scope = cfg["umm_scope"]
        if scope not in ("train", "all"):
            raise ConfigError(f"umm_scope must be train|all, got {scope!r}")
        umm_ids = train_ids if scope == "train" else sorted(
            r["video_id"] for r in io.read_feature_index(features))
        params = {"K": K, "cov": cfg["cov"], "seed": seed, "scope": scope,
                  "max_samples": _cfg_int(cfg, "umm_max_samples"),
                  "iters": _cfg_int(cfg, "em_iters"), "tol": cfg["em_tol"],
                  "ids": io.train_ids_hash(umm_ids)}
        key = _key_of("umm", params, ex_key)
        path = _stage_dir(work, "umm", key)
        if not _done(path):
            path.mkdir(parents=True, exist_ok=True)
            st = stage_train_umm(features, path / "umm.bin", K, cfg["cov"], seed,
                                 umm_ids, max_samples=params["max_samples"],
                                 max_iters=params["iters"],
                                 tol=_cfg_float(cfg, "em_tol"))
            _mark_done(path, st)
        stats.update({f"umm_{k}": v for k, v in _load_stats(path).items()})
        return path / "umm.bin", key

    def fit_stage(mode, umm_path, umm_key):
        T = _cfg_int(cfg, "T") if mode == "soft" else None
        params = {"mode": mode, "T": T, "K": K if mode == "rigid" else None}
        key = _key_of("fit", params, ex_key, umm_key or "")
        path = _stage_dir(work, "aligned", key)
        if not _done(path):
            stage_fit(features, path, mode, umm_path=umm_path, T=T, K=K)
            _mark_done(path)
        return path, key

    def logvecs_stage(aligned, aligned_key):
        params = {"vec": vec_kind, "use_loc": use_loc}
        key = _key_of("logvecs", params, aligned_key)
        path = _stage_dir(work, "logvecs", key)
        if not _done(path):
            st = stage_logvecs(aligned, path, vec_kind=vec_kind, use_loc=use_loc)
            _mark_done(path, st)
        stats.update(_load_stats(path))
        return path, key

    def encode_stage(aligned, aligned_key, energy, dim):
        logvecs, lv_key = logvecs_stage(aligned, aligned_key)
        params = {"energy": energy, "dim": dim, "train": train_hash}
        key = _key_of("encode", params, lv_key)
        path = _stage_dir(work, "xlt", key)
        if not _done(path):
            st = stage_encode(logvecs, path, train_ids, energy=energy, dim=dim)
            _mark_done(path, st)
        stats.update(_load_stats(path))
        return path, key

    if variant in ("explet", "dis-explet"):
        umm_path, umm_key = train_umm_stage()
        assign = cfg["assign"]
        if assign not in ("soft", "hard"):
            raise ConfigError(f"assign must be soft|hard, got {assign!r}")
        aligned, aln_key = fit_stage(assign, umm_path, umm_key)
    elif variant == "rigid":
        aligned, aln_key = fit_stage("rigid", None, None)
    elif variant == "fv":
        umm_path, umm_key = train_umm_stage()
    else:
        raise ConfigError(f"unknown variant {variant!r}")

    if variant == "fv":
        params = {"with_loc": _as_bool(cfg["fv_with_loc"], "fv_with_loc")}
        key = _key_of("fv", params, ex_key, umm_key)
        vecs_dir = _stage_dir(work, "fvvec", key)
        if not _done(vecs_dir):
            st = stage_encode_fv(features, umm_path, vecs_dir,
                                 with_loc=params["with_loc"])
            _mark_done(vecs_dir, st)
        stats.update(_load_stats(vecs_dir))
    elif variant == "dis-explet":
        energy = _cfg_float(cfg, "energy")
        xlt, xlt_key = encode_stage(aligned, aln_key, energy, None)
        dim = _cfg_int(cfg, "dim")
        emb_key = _key_of("embed", {"dim": dim, "train": train_hash}, xlt_key)
        emb_dir = _stage_dir(work, "emb", emb_key)
        if not _done(emb_dir):
            emb_dir.mkdir(parents=True, exist_ok=True)
            st = stage_train_embed(xlt, emb_dir / "emb.bin", dim, train_ids)
            _mark_done(emb_dir, st)
        stats.update(_load_stats(emb_dir))
        vecs_key = _key_of("embedded", {}, xlt_key, emb_key)
        vecs_dir = _stage_dir(work, "vecs", vecs_key)
        if not _done(vecs_dir):
            stage_apply_embed(xlt, emb_dir / "emb.bin", vecs_dir)
            _mark_done(vecs_dir)
    else:  # explet / rigid: PCA straight to the target dim
        dim = _cfg_int(cfg, "dim")
        vecs_dir, _ = encode_stage(aligned, aln_key, None, dim)

    svm_key = _key_of("svm", {"C": C, "norm": norm, "epochs": svm_epochs,
                              "gap": svm_gap, "train": train_hash},
                      str(vecs_dir))
    svm_dir = _stage_dir(work, "svm", svm_key)
    if not _done(svm_dir):
        svm_dir.mkdir(parents=True, exist_ok=True)
        st = stage_train_svm(vecs_dir, svm_dir / "svm.bin", train_ids, C=C,
                             normalize=norm, max_epochs=svm_epochs,
                             gap_rel_tol=svm_gap)
        _mark_done(svm_dir, st)

    _assert_fold_provenance(cfg, train_ids, test_ids, features, svm_dir)
    predictions = stage_predict(vecs_dir, svm_dir / "svm.bin", test_ids)
    return predictions, stats


def _assert_fold_provenance(cfg, train_ids, test_ids, features_dir, svm_dir):
    """Leakage guard: fitted artifacts must carry the fold's training-id hash."""
    if set(train_ids) & set(test_ids):
        raise DataError("train/test overlap inside a fold")
    expect = io.train_ids_hash(train_ids)
    svm_prov = io.read_provenance(Path(svm_dir) / "svm.bin")
    if svm_prov != expect:
        raise DataError("svm provenance does not match the fold training set")
    pca = Path(features_dir) / "pca.bin"
    if pca.is_file() and io.read_provenance(pca) != expect:
        raise DataError("feature PCA provenance does not match the training set")


def _run_fold_job(args):
    idx, cfg, variant, raw_dir, work, train_ids, test_ids = args
    preds, stats = _fold_pipeline(cfg, variant, raw_dir, work, train_ids, test_ids)
    return idx, preds, stats


def run_pipeline(cfg, variant, out_dir, work_dir):
    """Full cross-validated run of one variant; writes the report files."""
    if variant not in VARIANTS:
        raise ConfigError(f"variant must be one of {VARIANTS}, got {variant!r}")
    if "manifest" not in cfg:
        raise ConfigError("config needs a manifest=PATH entry")
    manifest_path = Path(cfg["manifest"])
    entries = io.read_manifest(manifest_path)
    classes = sorted({e.label for e in entries})

    protocol = CvProtocol(kind=cfg["protocol"], folds=_cfg_int(cfg, "folds"),
                          seed=_cfg_int(cfg, "seed"))
    folds = make_folds(entries, protocol)

    work = Path(work_dir)
    work.mkdir(parents=True, exist_ok=True)
    raw_params = {"desc": cfg["desc"], "patch": _cfg_int(cfg, "patch"),
                  "stride_frac": _cfg_float(cfg, "stride_frac"),
                  "stride_t": _cfg_int(cfg, "stride_t"),
                  "manifest": io.train_ids_hash([e.video_id for e in entries])}
    raw_key = _key_of("raw", raw_params)
    raw_dir = _stage_dir(work, "raw", raw_key)
    if not _done(raw_dir):
        stage_extract_raw(manifest_path, raw_dir, cfg["desc"],
                          _cfg_int(cfg, "patch"), _cfg_float(cfg, "stride_frac"),
                          _cfg_int(cfg, "stride_t"))
        _mark_done(raw_dir)

    jobs = [(i, cfg, variant, raw_dir, work, train, test)
            for i, (train, test) in enumerate(folds)]
    n_par = _cfg_int(cfg, "parallel_folds")
    results = {}
    if n_par > 1:
        with ProcessPoolExecutor(max_workers=n_par) as pool:
            for idx, preds, stats in pool.map(_run_fold_job, jobs):
                results[idx] = (preds, stats)
    else:
        for job in jobs:
            idx, preds, stats = _run_fold_job(job)
            results[idx] = (preds, stats)

    predictions = {}
    agg_stats = {}
    for idx in range(len(folds)):
        preds, stats = results[idx]
        predictions.update(preds)
        for k, v in stats.items():
            if isinstance(v, (int, float)):
                agg_stats[k] = agg_stats.get(k, 0) + v

    truth = [(e.video_id, e.label) for e in entries
             if e.video_id in predictions]
    report = evaluate(predictions, truth, classes=classes)
    if out_dir is not None:
        write_report(report, out_dir, cfg, variant, len(folds), agg_stats, entries)
    return report


def write_report(report, out_dir, cfg, variant, n_folds, stats, entries):
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    subj = {e.video_id: e.subject_id for e in entries}

    rows = [(i, subj[i], int(t), int(p))
            for i, t, p in zip(report.ids, report.y_true, report.y_pred)]
    write_predictions_csv(out_dir / "predictions.csv", rows)

    with open(out_dir / "confusion.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["true\\pred"] + [str(c) for c in report.classes])
        for i, c in enumerate(report.classes):
            writer.writerow([str(c)] + [str(v) for v in report.confusion[i]])

    lines = [f"variant: {variant}",
             f"desc: {cfg['desc']}",
             f"protocol: {cfg['protocol']}",
             f"n_folds: {n_folds}",
             f"K: {cfg['K']}",
             f"T: {cfg['T']}",
             f"dim: {cfg['dim']}",
             f"energy: {cfg['energy']}",
             f"assign: {cfg['assign']}",
             f"seed: {cfg['seed']}",
             f"n_videos: {len(entries)}",
             f"n_test: {len(report.ids)}",
             f"acc: {report.acc:.4f}",
             f"macc: {report.macc:.4f}"]
    for c in report.classes:
        r = report.per_class_recall.get(int(c))
        if r is not None:
            lines.append(f"recall_{c}: {r:.4f}")
    for k in sorted(stats):
        lines.append(f"{k}: {stats[k]}")
    (out_dir / "summary.txt").write_text("\n".join(lines) + "\n")

    with open(out_dir / "results.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["variant", "desc", "protocol", "K", "T", "dim",
                         "seed", "acc", "macc"])
        writer.writerow([variant, cfg["desc"], cfg["protocol"], cfg["K"],
                         cfg["T"], cfg["dim"], cfg["seed"],
                         f"{report.acc:.4f}", f"{report.macc:.4f}"])
    return out_dir
