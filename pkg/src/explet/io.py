"""Dataset and model file formats.

Everything binary is little-endian. Formats:

  STMF  per-clip feature file: "STMF", u32 version=1, u32 d_total,
        u32 count, then count x d_total float32 row-major.
  ALN1  per-clip alignment: "ALN1", u32 K, then per mode: u32 count,
        count x u32 feature-row indices, count x f64 log-probabilities.
  UMM1  mixture model (isotropic): "UMM1", u32 K, u32 d, f64 weights[K],
        f64 means[K*d], f64 sigmas[K], f64 std_mean[d], f64 std_scale[d].
        "UMM2" is the diagonal-covariance variant with sigmas[K*d].
  XLT1  vector archive: "XLT1", u32 K, u32 dim, then per video:
        u32 id-length, utf-8 id, K x dim float32 (read until EOF).
  PCA1  "PCA1" plus a PCA block (see _write_pca_block).
  EMB1  "EMB1", PCA block, u32 l, f64 V[pca_dim*l], f64 eigvals[l].
  SVM1  "SVM1", u32 n_classes, u32 dim(incl. bias), u8 normalize-flag,
        f64 C, i64 classes[n_classes], f64 W[n_classes*dim].

Every model artifact written by the pipeline gets a ".prov" sidecar holding
the sha256 of the sorted training video-id list, so leakage checks can
compare hashes without touching the binary layout.
"""

import csv
import hashlib
import re
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataError

MANIFEST_FIELDS = ["video_id", "subject_id", "label", "path"]


@dataclass(frozen=True)
class ManifestEntry:
    video_id: str
    subject_id: str
    label: int
    path: str


def read_manifest(path):
    path = Path(path)
    if not path.is_file():
        raise DataError(f"manifest not found: {path}")
    entries = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or [c.strip() for c in reader.fieldnames] != MANIFEST_FIELDS:
            raise DataError(f"manifest header must be {','.join(MANIFEST_FIELDS)}")
        for row in reader:
            try:
                entries.append(ManifestEntry(row["video_id"], row["subject_id"],
                                             int(row["label"]), row["path"]))
            except (KeyError, ValueError) as exc:
                raise DataError(f"bad manifest row {row!r}") from exc
    ids = [e.video_id for e in entries]
    if len(set(ids)) != len(ids):
        raise DataError("duplicate video_id in manifest")
    if not entries:
        raise DataError(f"manifest {path} is empty")
    return entries


def write_manifest(entries, path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(MANIFEST_FIELDS)
        for e in entries:
            writer.writerow([e.video_id, e.subject_id, e.label, e.path])


# --- frames ---

def read_pgm(path):
    """Binary (P5) PGM, 8-bit, as a float array in [0, 1]."""
    data = Path(path).read_bytes()
    m = re.match(rb"^P5\s+(?:#.*\s+)*(\d+)\s+(?:#.*\s+)*(\d+)\s+(?:#.*\s+)*(\d+)\s", data)
    if not m:
        raise DataError(f"not a binary PGM: {path}")
    w, h, maxval = (int(g) for g in m.groups())
    if maxval != 255:
        raise DataError(f"only 8-bit PGM supported, maxval={maxval} in {path}")
    pixels = np.frombuffer(data, dtype=np.uint8, count=w * h, offset=m.end())
    if pixels.size != w * h:
        raise DataError(f"truncated PGM: {path}")
    return pixels.reshape(h, w).astype(np.float64) / 255.0


def write_pgm(path, img):
    """Quantize a [0, 1] float image to 8 bits and write binary PGM."""
    arr = np.clip(np.asarray(img, dtype=np.float64), 0.0, 1.0)
    pixels = np.round(arr * 255.0).astype(np.uint8)
    h, w = pixels.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode())
        fh.write(pixels.tobytes())


def load_frames(dirpath):
    """All frames of a clip directory, sorted by filename, as (L, H, W) in [0, 1]."""
    dirpath = Path(dirpath)
    if not dirpath.is_dir():
        raise DataError(f"frame directory not found: {dirpath}")
    files = sorted(p for p in dirpath.iterdir()
                   if p.suffix.lower() in (".pgm", ".png"))
    if not files:
        raise DataError(f"no frames in {dirpath}")
    frames = []
    for p in files:
        if p.suffix.lower() == ".pgm":
            frames.append(read_pgm(p))
        else:
            from PIL import Image
            with Image.open(p) as im:
                frames.append(np.asarray(im.convert("L"), dtype=np.float64) / 255.0)
    stack = np.stack(frames)
    if any(f.shape != frames[0].shape for f in frames):
        raise DataError(f"frames of {dirpath} differ in size")
    return stack


# --- binary helpers ---

def _read_exact(fh, n, what):
    buf = fh.read(n)
    if len(buf) != n:
        raise DataError(f"truncated file while reading {what}")
    return buf


def _expect_magic(fh, magic, path):
    got = fh.read(4)
    if got != magic:
        raise DataError(f"{path}: expected magic {magic!r}, got {got!r}")


def _read_f64(fh, n, what):
    return np.frombuffer(_read_exact(fh, 8 * n, what), dtype="<f8").copy()


# --- STMF ---

def write_features(path, features):
    feats = np.asarray(features, dtype=np.float64)
    count, d_total = feats.shape
    with open(path, "wb") as fh:
        fh.write(struct.pack("<4sIII", b"STMF", 1, d_total, count))
        fh.write(feats.astype("<f4").tobytes())


def read_features(path):
    with open(path, "rb") as fh:
        _expect_magic(fh, b"STMF", path)
        version, d_total, count = struct.unpack("<III", _read_exact(fh, 12, "STMF header"))
        if version != 1:
            raise DataError(f"{path}: unsupported STMF version {version}")
        data = np.frombuffer(_read_exact(fh, 4 * count * d_total, "STMF rows"), dtype="<f4")
    return data.reshape(count, d_total).astype(np.float64)


FEATURE_INDEX_FIELDS = ["video_id", "subject_id", "label", "count", "d_total",
                        "wstar", "hstar", "lstar", "file"]


def write_feature_index(dirpath, rows):
    with open(Path(dirpath) / "index.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(FEATURE_INDEX_FIELDS)
        for row in rows:
            writer.writerow([row[k] for k in FEATURE_INDEX_FIELDS])


def read_feature_index(dirpath):
    path = Path(dirpath) / "index.csv"
    if not path.is_file():
        raise DataError(f"feature index not found: {path}")
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    for row in rows:
        for k in ("label", "count", "d_total", "wstar", "hstar", "lstar"):
            row[k] = int(row[k])
    return rows


# --- ALN1 ---

def write_aligned(path, modes):
    """modes: per-mode (feature-row indices, log-probabilities) pairs."""
    with open(path, "wb") as fh:
        fh.write(struct.pack("<4sI", b"ALN1", len(modes)))
        for idx, logp in modes:
            idx = np.asarray(idx, dtype="<u4")
            logp = np.asarray(logp, dtype="<f8")
            fh.write(struct.pack("<I", idx.size))
            fh.write(idx.tobytes())
            fh.write(logp.tobytes())


def read_aligned(path):
    modes = []
    with open(path, "rb") as fh:
        _expect_magic(fh, b"ALN1", path)
        (k,) = struct.unpack("<I", _read_exact(fh, 4, "ALN1 header"))
        for _ in range(k):
            (count,) = struct.unpack("<I", _read_exact(fh, 4, "mode count"))
            idx = np.frombuffer(_read_exact(fh, 4 * count, "mode indices"), dtype="<u4")
            logp = _read_f64(fh, count, "mode probs")
            modes.append((idx.astype(np.int64), logp))
    return modes


ALIGNED_INDEX_FIELDS = ["video_id", "subject_id", "label", "K", "file", "features_file"]


def write_aligned_index(dirpath, rows):
    with open(Path(dirpath) / "index.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(ALIGNED_INDEX_FIELDS)
        for row in rows:
            writer.writerow([row[k] for k in ALIGNED_INDEX_FIELDS])


def read_aligned_index(dirpath):
    path = Path(dirpath) / "index.csv"
    if not path.is_file():
        raise DataError(f"aligned index not found: {path}")
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    for row in rows:
        row["label"] = int(row["label"])
        row["K"] = int(row["K"])
    return rows


# --- UMM ---

def write_umm(path, model):
    iso = model.sigmas.ndim == 1
    with open(path, "wb") as fh:
        fh.write(struct.pack("<4sII", b"UMM1" if iso else b"UMM2", model.K, model.d))
        fh.write(model.weights.astype("<f8").tobytes())
        fh.write(model.means.astype("<f8").tobytes())
        fh.write(model.sigmas.astype("<f8").tobytes())
        fh.write(model.std_mean.astype("<f8").tobytes())
        fh.write(model.std_scale.astype("<f8").tobytes())


def read_umm(path):
    from .umm import UmmModel
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic not in (b"UMM1", b"UMM2"):
            raise DataError(f"{path}: bad UMM magic {magic!r}")
        K, d = struct.unpack("<II", _read_exact(fh, 8, "UMM header"))
        weights = _read_f64(fh, K, "weights")
        means = _read_f64(fh, K * d, "means").reshape(K, d)
        if magic == b"UMM1":
            sigmas = _read_f64(fh, K, "sigmas")
        else:
            sigmas = _read_f64(fh, K * d, "sigmas").reshape(K, d)
        std_mean = _read_f64(fh, d, "std mean")
        std_scale = _read_f64(fh, d, "std scale")
    return UmmModel(weights=weights, means=means, sigmas=sigmas,
                    std_mean=std_mean, std_scale=std_scale)


# --- PCA block / PCA1 / EMB1 ---

def _write_pca_block(fh, pca):
    d_in, d_out = pca.basis.shape
    fh.write(struct.pack("<II", d_in, d_out))
    fh.write(pca.mean.astype("<f8").tobytes())
    fh.write(pca.basis.astype("<f8").tobytes())
    fh.write(pca.eigvals.astype("<f8").tobytes())
    fh.write(struct.pack("<d", pca.retained_energy))


def _read_pca_block(fh):
    from .stfeat import PcaModel
    d_in, d_out = struct.unpack("<II", _read_exact(fh, 8, "PCA header"))
    mean = _read_f64(fh, d_in, "PCA mean")
    basis = _read_f64(fh, d_in * d_out, "PCA basis").reshape(d_in, d_out)
    eigvals = _read_f64(fh, d_out, "PCA eigvals")
    (retained,) = struct.unpack("<d", _read_exact(fh, 8, "PCA energy"))
    return PcaModel(mean=mean, basis=basis, eigvals=eigvals, retained_energy=retained)


def write_pca(path, pca):
    with open(path, "wb") as fh:
        fh.write(b"PCA1")
        _write_pca_block(fh, pca)


def read_pca(path):
    with open(path, "rb") as fh:
        _expect_magic(fh, b"PCA1", path)
        return _read_pca_block(fh)


def write_embedding(path, model):
    with open(path, "wb") as fh:
        fh.write(b"EMB1")
        _write_pca_block(fh, model.pca)
        l = model.V.shape[1]
        fh.write(struct.pack("<I", l))
        fh.write(model.V.astype("<f8").tobytes())
        fh.write(model.eigvals.astype("<f8").tobytes())


def read_embedding(path):
    from .embed import EmbeddingModel
    with open(path, "rb") as fh:
        _expect_magic(fh, b"EMB1", path)
        pca = _read_pca_block(fh)
        (l,) = struct.unpack("<I", _read_exact(fh, 4, "EMB1 l"))
        V = _read_f64(fh, pca.dim_out * l, "projection").reshape(pca.dim_out, l)
        eigvals = _read_f64(fh, l, "eigvals")
    return EmbeddingModel(pca=pca, V=V, eigvals=eigvals)


# --- XLT1 ---

def write_xlt(path, K, dim, items):
    """items: (video_id, (K, dim) array) pairs, written in the given order."""
    with open(path, "wb") as fh:
        fh.write(struct.pack("<4sII", b"XLT1", K, dim))
        for video_id, arr in items:
            arr = np.asarray(arr, dtype=np.float64)
            if arr.shape != (K, dim):
                raise DataError(f"{video_id}: expected ({K}, {dim}) block, got {arr.shape}")
            ident = video_id.encode()
            fh.write(struct.pack("<I", len(ident)))
            fh.write(ident)
            fh.write(arr.astype("<f4").tobytes())


def read_xlt(path):
    items = []
    with open(path, "rb") as fh:
        _expect_magic(fh, b"XLT1", path)
        K, dim = struct.unpack("<II", _read_exact(fh, 8, "XLT1 header"))
        while True:
            head = fh.read(4)
            if not head:
                break
            (n,) = struct.unpack("<I", head)
            ident = _read_exact(fh, n, "video id").decode()
            data = np.frombuffer(_read_exact(fh, 4 * K * dim, "vectors"), dtype="<f4")
            items.append((ident, data.reshape(K, dim).astype(np.float64)))
    return K, dim, items


# --- SVM1 ---

def write_svm(path, model):
    n, dim = model.W.shape
    with open(path, "wb") as fh:
        fh.write(struct.pack("<4sIIBd", b"SVM1", n, dim, int(model.normalize), model.C))
        fh.write(np.asarray(model.classes, dtype="<i8").tobytes())
        fh.write(model.W.astype("<f8").tobytes())


def read_svm(path):
    from .classify import LinearSvmModel
    with open(path, "rb") as fh:
        _expect_magic(fh, b"SVM1", path)
        n, dim, norm, C = struct.unpack("<IIBd", _read_exact(fh, 17, "SVM1 header"))
        classes = np.frombuffer(_read_exact(fh, 8 * n, "classes"), dtype="<i8").copy()
        W = _read_f64(fh, n * dim, "weights").reshape(n, dim)
    return LinearSvmModel(classes=classes, W=W, C=C, normalize=bool(norm))


# --- provenance sidecars ---

def train_ids_hash(ids):
    return hashlib.sha256("\n".join(sorted(ids)).encode()).hexdigest()


def write_provenance(artifact_path, train_ids):
    Path(str(artifact_path) + ".prov").write_text(train_ids_hash(train_ids) + "\n")


def read_provenance(artifact_path):
    path = Path(str(artifact_path) + ".prov")
    if not path.is_file():
        raise DataError(f"missing provenance sidecar: {path}")
    return path.read_text().strip()
