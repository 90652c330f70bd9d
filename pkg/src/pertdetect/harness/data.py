"""Desk-scale datasets: synthetic generation and the raw tensor file format."""

import csv
from dataclasses import dataclass

import numpy as np

from .._binio import FormatError, f64, read_file, u32

IMAGE_MAGIC = b"PIMG"
LABEL_MAGIC = b"PLBL"


@dataclass
class Dataset:
    images: np.ndarray  # (n, h*w*c), float64 in [0, 1]
    labels: np.ndarray  # (n,) int64, or empty when unlabeled
    dims: tuple  # (h, w, channels)
    provenance: str = "synthetic"

    def __post_init__(self):
        self.images = np.asarray(self.images, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        h, w, c = self.dims
        if self.images.ndim != 2 or self.images.shape[1] != h * w * c:
            raise ValueError(f"images of shape {self.images.shape} do not match dims {self.dims}")
        if len(self.labels) and len(self.labels) != len(self.images):
            raise ValueError(f"{len(self.images)} images but {len(self.labels)} labels")

    def __len__(self):
        return len(self.images)

    @property
    def n_classes(self) -> int:
        return int(self.labels.max()) + 1 if len(self.labels) else 0

    def subset(self, idx) -> "Dataset":
        return Dataset(self.images[idx], self.labels[idx] if len(self.labels) else self.labels,
                       self.dims, self.provenance)


@dataclass(frozen=True)
class SynthSpec:
    n_classes: int = 4
    per_class: int = 600
    dims: tuple = (8, 8, 1)
    separation: float = 0.17
    noise: float = 0.08
    # amplitude of per-image low-frequency variation shared by all classes;
    # gives the spectrum a gradual decay instead of a flat noise floor
    nuisance: float = 0.12
    grid: int = 3
    seed: int = 0


def _upsample(coarse: np.ndarray, h: int, w: int) -> np.ndarray:
    """Bilinear upsampling of (..., g, g) grids to (..., h, w)."""
    g = coarse.shape[-1]
    ys = np.linspace(0, g - 1, h)
    xs = np.linspace(0, g - 1, w)
    y0 = np.clip(np.floor(ys).astype(int), 0, g - 2)
    x0 = np.clip(np.floor(xs).astype(int), 0, g - 2)
    ty = (ys - y0)[:, None]
    tx = (xs - x0)[None, :]
    c00 = coarse[..., y0[:, None], x0[None, :]]
    c01 = coarse[..., y0[:, None], x0[None, :] + 1]
    c10 = coarse[..., y0[:, None] + 1, x0[None, :]]
    c11 = coarse[..., y0[:, None] + 1, x0[None, :] + 1]
    return (c00 * (1 - ty) * (1 - tx) + c01 * (1 - ty) * tx
            + c10 * ty * (1 - tx) + c11 * ty * tx)


def synth_dataset(spec: SynthSpec = SynthSpec()) -> Dataset:
    """Gaussian-blob class patterns upsampled to image size, plus noise, clipped to [0, 1].

    Each class mean is 0.5 plus ``separation`` times a smooth random pattern;
    the patterns are mutually orthogonal when the coarse grid has room for them.
    Every image adds a smooth nuisance field and i.i.d. pixel noise.
    Samples are interleaved by class so any prefix is roughly balanced.
    """
    K, n, (h, w, ch) = spec.n_classes, spec.per_class, spec.dims
    if K < 2:
        raise ValueError(f"need at least 2 classes, got {K}")
    if n < 1:
        raise ValueError(f"per-class count must be >= 1, got {n}")
    if min(h, w, ch) < 1 or h * w * ch < 2:
        raise ValueError(f"degenerate image dims {spec.dims}")
    g = max(2, min(spec.grid, h, w))
    rng = np.random.default_rng(spec.seed)

    patterns = _upsample(rng.standard_normal((K, ch, g, g)), h, w)  # (K, ch, h, w)
    if K <= ch * g * g:
        # orthogonal patterns put every pair of class means at the same distance,
        # so the margin (and attack success) does not hinge on the seed
        q, _ = np.linalg.qr(patterns.reshape(K, -1).T)
        patterns = q.T.reshape(patterns.shape)
    patterns /= np.sqrt(np.mean(patterns**2, axis=(1, 2, 3), keepdims=True))
    means = 0.5 + spec.separation * patterns

    total = K * n
    labels = np.tile(np.arange(K), n)
    nuis = _upsample(rng.standard_normal((total, ch, g, g)), h, w) * spec.nuisance
    noise = rng.standard_normal((total, ch, h, w)) * spec.noise
    imgs = np.clip(means[labels] + nuis + noise, 0.0, 1.0)
    # store channel-last, row-major pixels
    imgs = imgs.transpose(0, 2, 3, 1).reshape(total, h * w * ch)
    return Dataset(imgs, labels, (h, w, ch), "synthetic")


def split(ds: Dataset, n_train: int) -> tuple[Dataset, Dataset]:
    return ds.subset(slice(0, n_train)), ds.subset(slice(n_train, len(ds)))


def save_images(images, dims, path):
    images = np.asarray(images, dtype=np.float64)
    h, w, c = dims
    with open(path, "wb") as fh:
        fh.write(IMAGE_MAGIC + u32(len(images)) + u32(h) + u32(w) + u32(c) + f64(images))


def load_images(path) -> tuple[np.ndarray, tuple]:
    r = read_file(path, "image file")
    r.magic(IMAGE_MAGIC)
    n, h, w, c = r.u32(), r.u32(), r.u32(), r.u32()
    M = h * w * c
    if M == 0:
        raise FormatError("image file: zero image dims")
    px = r.f64(n * M).reshape(n, M)
    r.finish()
    bad = np.argwhere(~np.isfinite(px) | (px < 0) | (px > 1))
    if len(bad):
        i, j = bad[0]
        raise FormatError(f"image file: pixel out of range [0, 1] at image {i}, index {j}: {px[i, j]!r}")
    return px, (h, w, c)


def save_labels(labels, path):
    labels = np.asarray(labels, dtype=np.int64)
    with open(path, "wb") as fh:
        fh.write(LABEL_MAGIC + u32(len(labels)) + labels.astype("<u4").tobytes())


def load_labels(path) -> np.ndarray:
    r = read_file(path, "label file")
    r.magic(LABEL_MAGIC)
    n = r.u32()
    labels = r.u32s(n)
    r.finish()
    return labels


def save_dataset(ds: Dataset, image_path, label_path=None):
    save_images(ds.images, ds.dims, image_path)
    if label_path is not None:
        save_labels(ds.labels, label_path)


def ingest_raw(path, dims=None, label_path=None, n_classes=None) -> Dataset:
    """Read a raw tensor file (and optional label file) into a validated Dataset."""
    images, file_dims = load_images(path)
    if dims is not None and tuple(dims) != file_dims:
        raise FormatError(f"image file dims {file_dims} differ from expected {tuple(dims)}")
    labels = np.zeros(0, dtype=np.int64)
    if label_path is not None:
        labels = load_labels(label_path)
        if len(labels) != len(images):
            raise FormatError(f"{len(images)} images but {len(labels)} labels")
        if n_classes is not None and len(labels) and labels.max() >= n_classes:
            i = int(np.argmax(labels >= n_classes))
            raise FormatError(f"label {labels[i]} at index {i} is >= K={n_classes}")
    return Dataset(images, labels, file_dims, "ingested")


CORPUS_FIELDS = ["index", "attack", "epsilon", "success", "l2", "linf", "clean_label", "adv_label"]


def save_corpus(corpus, dims, image_path, meta_path):
    """Write attack outputs as a raw tensor file plus a CSV metadata sidecar."""
    save_images(corpus.images, dims, image_path)
    with open(meta_path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(CORPUS_FIELDS)
        for idx, r in zip(corpus.source_index, corpus.results):
            wr.writerow([int(idx), corpus.attack, repr(float(corpus.epsilon)), int(r.success),
                         repr(r.l2_distortion), repr(r.linf_distortion), r.clean_label, r.adv_label])


def load_corpus(image_path, meta_path, successful_only=True):
    """Return (images, metadata rows); by default only successful attacks."""
    images, dims = load_images(image_path)
    with open(meta_path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if len(rows) != len(images):
        raise FormatError(f"corpus metadata has {len(rows)} rows for {len(images)} images")
    if rows and list(rows[0].keys()) != CORPUS_FIELDS:
        raise FormatError(f"corpus metadata columns {list(rows[0].keys())} != {CORPUS_FIELDS}")
    if successful_only:
        keep = np.array([r["success"] == "1" for r in rows], dtype=bool)
        images = images[keep]
        rows = [r for r, k in zip(rows, keep) if k]
    return images, rows, dims
