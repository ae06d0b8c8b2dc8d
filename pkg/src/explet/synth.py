"""Synthetic clip generator: the desk-scale stand-in for restricted datasets.

Each class is a localized moving bump: a class-specific anchor region and
travel direction on a shared textured background. A clip plays neutral
frames, then ramps the bump in while it travels (onset start and length
jittered per clip by the warp parameter). Subjects contribute a smooth
appearance offset; pixel noise is optional. Everything derives from
per-(subject, class, clip) child seeds, so output is bit-reproducible and
independent of generation order.
"""

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .io import ManifestEntry, write_manifest, write_pgm

FRAME_SIZE = 96


@dataclass(frozen=True)
class SyntheticSpec:
    n_subjects: int = 12
    n_classes: int = 6
    clips_per: int = 5       # clips per (subject, class)
    frames: int = 10
    warp: float = 0.3        # 0 = identical timing, 1 = heavy onset jitter
    noise: float = 0.02
    seed: int = 0

    def __post_init__(self):
        if min(self.n_subjects, self.n_classes, self.clips_per, self.frames) < 1:
            raise ValueError("synthetic spec dimensions must be >= 1")
        if not 0.0 <= self.warp <= 1.0:
            raise ValueError(f"warp must be in [0, 1], got {self.warp}")


def _base_pattern(size):
    ys, xs = np.mgrid[0:size, 0:size].astype(np.float64)
    c = (size - 1) / 2.0
    r = np.hypot(xs - c, ys - c) / c
    return (0.45 - 0.10 * r
            + 0.12 * np.cos(2 * np.pi * xs / 31.0) * np.cos(2 * np.pi * ys / 29.0))


def _subject_offset(si, spec, size):
    rng = np.random.default_rng(np.random.SeedSequence(spec.seed, spawn_key=(0, si)))
    ys, xs = np.mgrid[0:size, 0:size].astype(np.float64)
    off = np.full((size, size), rng.uniform(-0.05, 0.05))
    for _ in range(2):
        fx, fy = rng.uniform(0.5, 1.6, size=2)
        px, py = rng.uniform(0, 2 * np.pi, size=2)
        off += 0.04 * np.cos(2 * np.pi * fx * xs / size + px) \
            * np.cos(2 * np.pi * fy * ys / size + py)
    return off


def _class_motion(ci, n_classes, size):
    """Anchor position and travel direction of class ci's bump."""
    phi = 2 * np.pi * ci / n_classes
    c = (size - 1) / 2.0
    anchor = np.array([c + 26.0 * math.cos(phi), c + 26.0 * math.sin(phi)])
    theta = phi + np.pi / 2.0
    direction = np.array([math.cos(theta), math.sin(theta)])
    return anchor, direction


def _onset_profile(L, warp, rng):
    """Per-frame activation in [0, 1]: zeros, linear ramp, then hold."""
    u1, u2 = rng.uniform(size=2)
    start = int(round(u1 * warp * 0.55 * (L - 1)))
    span = max(L - 1 - start, 1)
    length = max(2, int(round(span * (1.0 - 0.6 * warp * u2)))) if span >= 2 else 1
    prog = np.zeros(L)
    for t in range(L):
        if t <= start:
            prog[t] = 0.0
        else:
            prog[t] = min((t - start) / length, 1.0)
    return prog


def clip_frames(spec, si, ci, ki, size=FRAME_SIZE):
    """All frames of one synthetic clip as an (L, size, size) stack in [0, 1]."""
    rng = np.random.default_rng(np.random.SeedSequence(spec.seed, spawn_key=(1, si, ci, ki)))
    base = _base_pattern(size) + _subject_offset(si, spec, size)
    anchor, direction = _class_motion(ci, spec.n_classes, size)
    prog = _onset_profile(spec.frames, spec.warp, rng)

    ys, xs = np.mgrid[0:size, 0:size].astype(np.float64)
    frames = np.empty((spec.frames, size, size))
    for t in range(spec.frames):
        img = base.copy()
        a = prog[t]
        if a > 0.0:
            pos = anchor + a * 14.0 * direction
            bump = np.exp(-((xs - pos[0]) ** 2 + (ys - pos[1]) ** 2) / (2 * 6.5 ** 2))
            img += 0.55 * a * bump
        if spec.noise > 0.0:
            img += rng.normal(0.0, spec.noise, size=(size, size))
        frames[t] = np.clip(img, 0.0, 1.0)
    return frames


def gen_synthetic(spec, out_dir):
    """Write all clips plus manifest.csv; returns the manifest entries."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    entries = []
    for si in range(spec.n_subjects):
        for ci in range(spec.n_classes):
            for ki in range(spec.clips_per):
                video_id = f"s{si:02d}c{ci}k{ki:02d}"
                clip_dir = out_dir / video_id
                clip_dir.mkdir(exist_ok=True)
                frames = clip_frames(spec, si, ci, ki)
                for t in range(frames.shape[0]):
                    write_pgm(clip_dir / f"frame_{t:04d}.pgm", frames[t])
                # path relative to the manifest so the dataset dir can move
                entries.append(ManifestEntry(video_id=video_id,
                                             subject_id=f"subj{si:02d}",
                                             label=ci, path=video_id))
    write_manifest(entries, out_dir / "manifest.csv")
    return entries
