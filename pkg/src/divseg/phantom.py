"""Synthetic multimodal tumor phantoms, the MVOL volume format, and
dataset manifests.

Each phantom nests three ellipsoids (edema > core > enhancing). The inner
regions shrink by independent per-axis fractions and sit at random offsets
inside their parent, so inner boundaries cannot be inferred from the outer
outline alone; the intensity contrasts have to be read. Modalities differ
only through a fixed contrast table, each specializing in part of the
anatomy: modality 1 lights up the whole tumor uniformly (best outline,
no internal structure), modality 2 grades all three regions moderately,
modality 3 makes the enhancing region pop, and modality 4 makes the core
pop. Gaussian noise and per-volume standardization finish the job.
"""

import json
import struct
from pathlib import Path

import numpy as np

from .errors import ConfigError, ParseError
from .tensor import Tensor

NOISE_SIGMA = 0.10
LABEL_CLASSES = (0, 1, 2, 3)  # background, edema, core, enhancing

# contrast added per modality for label classes 1..3
CONTRAST = {
    1: (1.00, 1.00, 1.00),
    2: (0.50, 0.85, 1.15),
    3: (0.15, 0.30, 1.60),
    4: (0.20, 0.90, 0.50),
}

# ellipsoid sizing: edema semi-axes relative to volume dims, inner regions
# relative to their parent's semi-axes (per axis), and the share of the
# containment margin an inner center may wander
EDEMA_FRAC = (0.30, 0.40)
CORE_FRAC = (0.60, 0.80)
ENH_FRAC = (0.50, 0.72)
CENTER_FRAC = (0.40, 0.60)
OFFSET_FRAC = 0.9


class Sample:
    """One phantom: four modality volumes plus the label volume."""

    __slots__ = ("id", "volumes", "labels")

    def __init__(self, sample_id, volumes, labels):
        self.id = str(sample_id)
        self.volumes = volumes
        self.labels = labels


def _normalize_dims(dims):
    if isinstance(dims, int):
        dims = (dims, dims, dims)
    dims = tuple(int(d) for d in dims)
    if len(dims) != 3:
        raise ConfigError(f"dims must give three extents, got {dims}")
    if any(d < 8 for d in dims):
        raise ConfigError(f"phantom dims must be >= 8 per axis, got {dims}")
    return dims


def _inner_ellipsoid(rng, outer_center, outer_ax, frac_range):
    """Random ellipsoid guaranteed strictly inside the outer one.

    Semi-axes shrink by independent per-axis fractions f; the center moves
    by a vector whose norm in the outer ellipsoid's metric stays below
    OFFSET_FRAC * (1 - max f). For any inner point x = c + diag(ax) y with
    |y| <= 1 the triangle inequality then bounds its outer-metric norm by
    offset + max f < 1, so containment holds exactly.
    """
    frac = rng.uniform(*frac_range, size=3)
    direction = rng.normal(size=3)
    direction /= max(np.linalg.norm(direction), 1e-12)
    radius = rng.uniform(0.0, OFFSET_FRAC) * (1.0 - frac.max())
    center = outer_center + radius * direction * outer_ax
    return center, outer_ax * frac


def generate_phantom(seed, dims=16):
    """Deterministic offset-nested-ellipsoid phantom for one integer seed."""
    dims = _normalize_dims(dims)
    rng = np.random.default_rng(seed)
    d = np.asarray(dims, dtype=np.float64)

    edema_c = rng.uniform(*CENTER_FRAC, size=3) * d
    edema_ax = rng.uniform(*EDEMA_FRAC, size=3) * d
    core_c, core_ax = _inner_ellipsoid(rng, edema_c, edema_ax, CORE_FRAC)
    enh_c, enh_ax = _inner_ellipsoid(rng, core_c, core_ax, ENH_FRAC)

    grids = np.indices(dims, dtype=np.float64)

    def inside(center, axes):
        q = sum(((grids[a] - center[a]) / axes[a]) ** 2 for a in range(3))
        return q <= 1.0

    labels = np.zeros(dims, dtype=np.int64)
    for cls, center, axes in (
        (1, edema_c, edema_ax),
        (2, core_c, core_ax),
        (3, enh_c, enh_ax),
    ):
        labels[inside(center, axes)] = cls

    volumes = {}
    for m in range(1, 5):
        intensity = np.zeros(dims)
        for cls, contrast in enumerate(CONTRAST[m], start=1):
            intensity[labels == cls] = contrast
        intensity = intensity + rng.normal(0.0, NOISE_SIGMA, size=dims)
        intensity = (intensity - intensity.mean()) / intensity.std()
        volumes[m] = Tensor(intensity[None])
    return Sample(f"p{int(seed)}", volumes, Tensor(labels))


# MVOL format ----------------------------------------------------------------

MVOL_MAGIC = b"MVOL"
MVOL_VERSION = 1
_DTYPE_TAGS = {"f32": 1, "u8": 2}
_TAG_DTYPES = {v: k for k, v in _DTYPE_TAGS.items()}


def write_volume(path, t, dtype):
    """Write a volume: magic, version, dtype tag, u32 extents, raw payload.

    f32 expects [C,D,H,W] real data (narrowed from f64); u8 expects a
    [D,H,W] label volume with integer values (stored with C = 1).
    """
    if dtype not in _DTYPE_TAGS:
        raise ConfigError(f"write_volume: dtype must be f32 or u8, got {dtype!r}")
    data = t.data if isinstance(t, Tensor) else np.asarray(t)
    if dtype == "f32":
        if data.ndim != 4:
            raise ConfigError(f"f32 volumes are [C,D,H,W], got shape {data.shape}")
        extents = data.shape
        payload = np.ascontiguousarray(data, dtype="<f4").tobytes()
    else:
        if data.ndim != 3:
            raise ConfigError(f"u8 label volumes are [D,H,W], got shape {data.shape}")
        if not np.all(data == np.round(data)) or data.min() < 0 or data.max() > 255:
            raise ConfigError("u8 volume values must be integers in 0..255")
        extents = (1,) + data.shape
        payload = np.ascontiguousarray(data, dtype=np.uint8).tobytes()
    with open(path, "wb") as fh:
        fh.write(MVOL_MAGIC)
        fh.write(struct.pack("<BB", MVOL_VERSION, _DTYPE_TAGS[dtype]))
        fh.write(struct.pack("<4I", *extents))
        fh.write(payload)


def read_volume(path):
    """Inverse of write_volume; returns (Tensor, dtype string)."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < 22:
        raise ParseError(f"{path}: shorter than the 22-byte header")
    if raw[:4] != MVOL_MAGIC:
        raise ParseError(f"{path}: bad magic {raw[:4]!r}")
    version, tag = struct.unpack_from("<BB", raw, 4)
    if version != MVOL_VERSION:
        raise ParseError(f"{path}: unknown version {version}")
    if tag not in _TAG_DTYPES:
        raise ParseError(f"{path}: unknown dtype tag {tag}")
    dtype = _TAG_DTYPES[tag]
    extents = struct.unpack_from("<4I", raw, 6)
    count = int(np.prod(extents))
    itemsize = 4 if dtype == "f32" else 1
    expected = 22 + count * itemsize
    if len(raw) != expected:
        raise ParseError(
            f"{path}: payload length {len(raw) - 22} does not match extents "
            f"{extents} (expected {expected} bytes total)"
        )
    if dtype == "f32":
        data = np.frombuffer(raw, dtype="<f4", count=count, offset=22)
        arr = data.astype(np.float64).reshape(extents)
    else:
        data = np.frombuffer(raw, dtype=np.uint8, count=count, offset=22)
        arr = data.astype(np.float64).reshape(extents[1:])
    return Tensor(arr), dtype


# dataset assembly -----------------------------------------------------------


class Manifest:
    """Per-split index of sample files; paths are relative to its directory."""

    __slots__ = ("root", "split", "seed", "samples")

    def __init__(self, root, split, seed, samples):
        self.root = Path(root)
        self.split = str(split)
        self.seed = int(seed)
        # samples: list of (id, [4 image paths], label path), paths relative
        self.samples = list(samples)

    def __len__(self):
        return len(self.samples)

    def image_paths(self, idx):
        return [self.root / p for p in self.samples[idx][1]]

    def label_path(self, idx):
        return self.root / self.samples[idx][2]

    def save(self, path):
        doc = {
            "split": self.split,
            "seed": self.seed,
            "samples": [
                {"id": sid, "images": list(imgs), "label": lbl}
                for sid, imgs, lbl in self.samples
            ],
        }
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(doc, fh, indent=2, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load(cls, path):
        path = Path(path)
        try:
            with open(path, encoding="utf-8") as fh:
                doc = json.load(fh)
            samples = [
                (str(s["id"]), [str(p) for p in s["images"]], str(s["label"]))
                for s in doc["samples"]
            ]
            return cls(path.parent, doc["split"], doc["seed"], samples)
        except (OSError, ValueError, KeyError, TypeError) as exc:
            raise ParseError(f"{path}: invalid manifest: {exc}") from None

    def validate(self):
        for idx in range(len(self.samples)):
            for p in self.image_paths(idx):
                read_volume(p)
            read_volume(self.label_path(idx))

    def load_sample(self, idx):
        sid, _, _ = self.samples[idx]
        volumes = {}
        for m, p in enumerate(self.image_paths(idx), start=1):
            vol, dtype = read_volume(p)
            if dtype != "f32" or vol.data.ndim != 4:
                raise ParseError(f"{p}: expected an f32 image volume")
            volumes[m] = vol
        lbl, dtype = read_volume(self.label_path(idx))
        if dtype != "u8":
            raise ParseError(f"{self.label_path(idx)}: expected u8 labels")
        return Sample(sid, volumes, lbl)


def make_dataset(n_train, n_test, seed, out_dir, dims=16):
    """Generate phantoms into <out_dir>/<split>/ and write JSON manifests.

    Per-sample seeds come from one seed sequence, so samples are mutually
    independent and the whole tree is a pure function of the arguments.
    """
    if n_train < 1 or n_test < 1:
        raise ConfigError("need at least one sample per split")
    dims = _normalize_dims(dims)
    out_dir = Path(out_dir)
    sample_seeds = np.random.SeedSequence(seed).generate_state(
        n_train + n_test, dtype=np.uint64
    )
    manifests = {}
    cursor = 0
    for split, count in (("train", n_train), ("test", n_test)):
        split_dir = out_dir / split
        split_dir.mkdir(parents=True, exist_ok=True)
        entries = []
        for i in range(count):
            sample = generate_phantom(int(sample_seeds[cursor]), dims)
            cursor += 1
            sid = f"{split}_{i:03d}"
            image_names = [f"{sid}_m{m}.vol" for m in range(1, 5)]
            for m, name in enumerate(image_names, start=1):
                write_volume(split_dir / name, sample.volumes[m], "f32")
            label_name = f"{sid}_lbl.vol"
            write_volume(split_dir / label_name, sample.labels, "u8")
            entries.append((sid, image_names, label_name))
        manifest = Manifest(split_dir, split, seed, entries)
        manifest.save(split_dir / "manifest.json")
        manifests[split] = manifest
    return manifests
