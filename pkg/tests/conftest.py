import numpy as np
import pytest

from explet.synth import SyntheticSpec, gen_synthetic


@pytest.fixture
def rng():
    return np.random.default_rng(42)


TINY_SPEC = SyntheticSpec(n_subjects=4, n_classes=2, clips_per=2, frames=6,
                          warp=0.2, noise=0.01, seed=11)


@pytest.fixture(scope="session")
def tiny_dataset(tmp_path_factory):
    """A 16-clip synthetic dataset shared by the slower harness tests."""
    root = tmp_path_factory.mktemp("tinydata")
    entries = gen_synthetic(TINY_SPEC, root)
    return root / "manifest.csv", entries


TINY_RUN_CONFIG = {
    "desc": "sift",
    "patch": "24",
    "stride_frac": "1.0",
    "stride_t": "2",
    "pca_dim": "16",
    "K": "16",
    "T": "8",
    "cov": "iso",
    "umm_scope": "train",
    "umm_max_samples": "100000",
    "em_iters": "40",
    "em_tol": "1e-5",
    "assign": "soft",
    "energy": "0.95",
    "dim": "8",
    "vec": "full",
    "cov_with_loc": "false",
    "fv_with_loc": "false",
    "C": "1.0",
    "norm": "true",
    "protocol": "kfold",
    "folds": "2",
    "seed": "5",
    "parallel_folds": "1",
    "svm_epochs": "300",
    "svm_gap_tol": "1e-3",
}


@pytest.fixture
def tiny_run_config(tiny_dataset):
    manifest, _ = tiny_dataset
    cfg = dict(TINY_RUN_CONFIG)
    cfg["manifest"] = str(manifest)
    return cfg
