"""Shared-backbone multimodal segmentation network.

Four unshared channel encoders lift each modality to a common width; one
parameter-shared backbone (residual block per level, strided transitions)
produces per-level features for every available modality; a parameter-free
masked mean fuses them per level; a decoder with fused skip connections
emits voxel logits. The fused per-level features double as distillation
taps: teacher features under the full mask, student features otherwise.
"""

import json
import struct

import numpy as np

from .distill import VariationalHead
from .errors import ConfigError, ContractError, ParseError, ShapeError
from .tensor import Tensor, conv3d, downsample2, group_norm, relu, upsample_nn2

MODALITY_NAMES = ("Fl", "T2", "T1c", "T1")

# the fifteen non-empty modality subsets in the reporting order used
# throughout: singles, pairs, complements-of-one, full
ALL_SUBSETS = (
    (1,),
    (2,),
    (3,),
    (4,),
    (1, 2),
    (1, 3),
    (2, 3),
    (1, 4),
    (2, 4),
    (3, 4),
    (1, 2, 3),
    (1, 2, 4),
    (1, 3, 4),
    (2, 3, 4),
    (1, 2, 3, 4),
)


def subset_label(indices):
    """Human-readable name for a modality subset, matching the table headers."""
    indices = tuple(sorted(indices))
    if len(indices) == 4:
        return "Full"
    if len(indices) == 3:
        missing = (set(range(1, 5)) - set(indices)).pop()
        return "~" + MODALITY_NAMES[missing - 1]
    if len(indices) == 2:
        a, b = indices
        return f"{MODALITY_NAMES[b - 1]},{MODALITY_NAMES[a - 1]}"
    return MODALITY_NAMES[indices[0] - 1]


class ModalityMask:
    """Which of the four input modalities are available (indices 1..4)."""

    __slots__ = ("available",)

    def __init__(self, available):
        bits = tuple(bool(b) for b in available)
        if len(bits) != 4:
            raise ConfigError(f"mask needs 4 flags, got {len(bits)}")
        if not any(bits):
            raise ContractError("at least one modality must be available")
        self.available = bits

    @classmethod
    def from_indices(cls, indices):
        indices = set(int(i) for i in indices)
        if not indices <= {1, 2, 3, 4}:
            raise ConfigError(f"modality indices must be in 1..4, got {sorted(indices)}")
        return cls(tuple(i in indices for i in range(1, 5)))

    @classmethod
    def full(cls):
        return cls((True, True, True, True))

    def indices(self):
        return tuple(i for i in range(1, 5) if self.available[i - 1])

    @property
    def is_full(self):
        return all(self.available)

    def __eq__(self, other):
        return isinstance(other, ModalityMask) and self.available == other.available

    def __hash__(self):
        return hash(self.available)

    def __repr__(self):
        return f"ModalityMask({subset_label(self.indices())})"


class ArchConfig:
    """Channel ladder and head sizing for the desk-scale network."""

    __slots__ = ("channels", "num_classes", "groups")

    def __init__(self, channels=(8, 16, 32), num_classes=4, groups=4):
        self.channels = tuple(int(c) for c in channels)
        self.num_classes = int(num_classes)
        self.groups = int(groups)
        if len(self.channels) < 2:
            raise ConfigError("need at least two resolution levels")
        if any(c <= 0 for c in self.channels) or self.num_classes < 2 or self.groups < 1:
            raise ConfigError("channels, classes, and groups must be positive")
        for c in self.channels:
            if c % self.groups:
                raise ConfigError(f"channels {c} not divisible by {self.groups} groups")

    @property
    def levels(self):
        return len(self.channels)

    def to_dict(self):
        return {
            "channels": list(self.channels),
            "num_classes": self.num_classes,
            "groups": self.groups,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            channels=d["channels"],
            num_classes=d["num_classes"],
            groups=d["groups"],
        )


class ModelParams:
    """Ordered name -> Tensor parameter store (tensors carry requires_grad)."""

    def __init__(self, arch, tensors):
        self.arch = arch
        self._tensors = dict(tensors)

    def __getitem__(self, name):
        return self._tensors[name]

    def __contains__(self, name):
        return name in self._tensors

    def __len__(self):
        return len(self._tensors)

    def names(self):
        return list(self._tensors)

    def items(self):
        return self._tensors.items()

    def size(self):
        return sum(t.size for t in self._tensors.values())

    def set(self, name, tensor):
        old = self._tensors[name]
        if tensor.shape != old.shape:
            raise ShapeError(
                f"parameter {name}: shape {tensor.shape} does not match {old.shape}"
            )
        self._tensors[name] = tensor

    def heads(self):
        """Variational heads over the backbone levels, sharing these tensors."""
        return [
            VariationalHead(
                self[f"vid.l{k}.mu.w"],
                self[f"vid.l{k}.mu.b"],
                self[f"vid.l{k}.log_sigma"],
            )
            for k in range(1, self.arch.levels + 1)
        ]


def _param_specs(arch):
    ch = arch.channels
    specs = []
    for i in range(1, 5):
        specs.append((f"enc{i}.conv.w", (ch[0], 1, 3, 3, 3)))
        specs.append((f"enc{i}.conv.b", (ch[0],)))
    for k, c in enumerate(ch, start=1):
        for conv_id in (1, 2):
            specs.append((f"bb.l{k}.res.conv{conv_id}.w", (c, c, 3, 3, 3)))
            specs.append((f"bb.l{k}.res.conv{conv_id}.b", (c,)))
            specs.append((f"bb.l{k}.res.n{conv_id}.g", (c,)))
            specs.append((f"bb.l{k}.res.n{conv_id}.b", (c,)))
    for k in range(1, arch.levels):
        specs.append((f"bb.t{k}.conv.w", (ch[k], ch[k - 1], 3, 3, 3)))
        specs.append((f"bb.t{k}.conv.b", (ch[k],)))
        specs.append((f"bb.t{k}.norm.g", (ch[k],)))
        specs.append((f"bb.t{k}.norm.b", (ch[k],)))
    for k in range(arch.levels - 1, 0, -1):
        specs.append((f"dec.u{k}.conv.w", (ch[k - 1], ch[k], 3, 3, 3)))
        specs.append((f"dec.u{k}.conv.b", (ch[k - 1],)))
        specs.append((f"dec.u{k}.norm.g", (ch[k - 1],)))
        specs.append((f"dec.u{k}.norm.b", (ch[k - 1],)))
    specs.append(("dec.head.w", (arch.num_classes, ch[0], 1, 1, 1)))
    specs.append(("dec.head.b", (arch.num_classes,)))
    for k, c in enumerate(ch, start=1):
        specs.append((f"vid.l{k}.mu.w", (c, c, 1, 1, 1)))
        specs.append((f"vid.l{k}.mu.b", (c,)))
        specs.append((f"vid.l{k}.log_sigma", (c,)))
    return specs


def init_params(seed, arch=None):
    """Deterministic parameter initialization.

    Convolution weights are uniform on +-1/sqrt(fan_in); every bias starts
    at zero; norm gains at one; log_sigma at zero.
    """
    arch = arch or ArchConfig()
    rng = np.random.default_rng(seed)
    tensors = {}
    for name, shape in _param_specs(arch):
        if name.endswith(".w"):
            fan_in = int(np.prod(shape[1:]))
            bound = 1.0 / np.sqrt(fan_in)
            data = rng.uniform(-bound, bound, size=shape)
        elif name.endswith(".g"):
            data = np.ones(shape)
        else:  # biases and log_sigma
            data = np.zeros(shape)
        tensors[name] = Tensor(data, requires_grad=True)
    return ModelParams(arch, tensors)


def _bias(params, name, c):
    return params[name].reshape((c, 1, 1, 1))


def _conv_block(params, prefix, x, groups):
    w = params[f"{prefix}.conv.w"]
    c = w.shape[0]
    y = conv3d(x, w) + _bias(params, f"{prefix}.conv.b", c)
    y = group_norm(y, params[f"{prefix}.norm.g"], params[f"{prefix}.norm.b"], groups)
    return relu(y)


def _res_block(params, k, x, groups):
    prefix = f"bb.l{k}.res"
    c = x.shape[0]
    y = conv3d(x, params[f"{prefix}.conv1.w"]) + _bias(params, f"{prefix}.conv1.b", c)
    y = group_norm(y, params[f"{prefix}.n1.g"], params[f"{prefix}.n1.b"], groups)
    y = relu(y)
    y = conv3d(y, params[f"{prefix}.conv2.w"]) + _bias(params, f"{prefix}.conv2.b", c)
    y = group_norm(y, params[f"{prefix}.n2.g"], params[f"{prefix}.n2.b"], groups)
    return relu(x + y)


def encode_modality(params, i, x):
    """Per-level features for modality i: shared backbone over f_i(x_i)."""
    i = int(i)
    if not 1 <= i <= 4:
        raise ConfigError(f"modality index must be in 1..4, got {i}")
    if not isinstance(x, Tensor) or x.data.ndim != 4 or x.shape[0] != 1:
        raise ShapeError(
            f"modality input must be a [1,D,H,W] tensor, got "
            f"{getattr(x, 'shape', type(x))}"
        )
    arch = params.arch
    c0 = arch.channels[0]
    h = conv3d(x, params[f"enc{i}.conv.w"]) + _bias(params, f"enc{i}.conv.b", c0)
    levels = []
    for k in range(1, arch.levels + 1):
        if k > 1:
            h = downsample2(h)
            h = _conv_block(params, f"bb.t{k - 1}", h, arch.groups)
        h = _res_block(params, k, h, arch.groups)
        levels.append(h)
    return levels


def fuse(features, mask):
    """Masked arithmetic mean of per-modality features, per level.

    Summation runs in canonical modality order 1 -> 4, so the result does
    not depend on dict ordering.
    """
    indices = mask.indices()
    for i in indices:
        if i not in features or features[i] is None:
            raise ContractError(f"fuse: features for modality {i} missing")
    n_levels = len(features[indices[0]])
    fused = []
    for k in range(n_levels):
        acc = None
        for i in indices:
            h = features[i][k]
            acc = h if acc is None else acc + h
        fused.append(acc * (1.0 / len(indices)))
    return fused


class ForwardOutput:
    __slots__ = ("logits", "taps")

    def __init__(self, logits, taps):
        self.logits = logits
        self.taps = taps


def forward_features(params, volumes, mask):
    """Encode the available modalities and fuse them per level.

    These fused features are the distillation taps; the teacher pass stops
    here since only its taps are consumed.
    """
    if not isinstance(volumes, dict):
        volumes = {i + 1: v for i, v in enumerate(volumes)}
    for i in mask.indices():
        if volumes.get(i) is None:
            raise ContractError(f"forward: volume for available modality {i} missing")
    features = {i: encode_modality(params, i, volumes[i]) for i in mask.indices()}
    return fuse(features, mask)


def forward(params, volumes, mask):
    """Full pass: encode available modalities, fuse, decode to logits.

    volumes maps modality index (1..4) to a [1,D,H,W] tensor; entries for
    masked-off modalities are never touched. taps are the fused per-level
    features (teacher features under the full mask, student otherwise).
    """
    fused = forward_features(params, volumes, mask)
    arch = params.arch
    x = fused[-1]
    for k in range(arch.levels - 1, 0, -1):
        x = upsample_nn2(x)
        w = params[f"dec.u{k}.conv.w"]
        c = w.shape[0]
        x = conv3d(x, w) + _bias(params, f"dec.u{k}.conv.b", c)
        x = x + fused[k - 1]
        x = group_norm(x, params[f"dec.u{k}.norm.g"], params[f"dec.u{k}.norm.b"], arch.groups)
        x = relu(x)
    logits = conv3d(x, params["dec.head.w"]) + _bias(
        params, "dec.head.b", arch.num_classes
    )
    return ForwardOutput(logits, fused)


# checkpoint format: magic, version, JSON manifest, raw little-endian f64 ----

CHECKPOINT_MAGIC = b"DSEGPRM"
CHECKPOINT_VERSION = 1


def save_params(path, params):
    """Write parameters to the binary checkpoint format (byte-deterministic)."""
    manifest = {
        "arch": params.arch.to_dict(),
        "params": [[name, list(t.shape)] for name, t in params.items()],
    }
    blob = json.dumps(manifest, separators=(",", ":"), sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<H", CHECKPOINT_VERSION))
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        for _, t in params.items():
            fh.write(np.ascontiguousarray(t.data, dtype="<f8").tobytes())


def load_params(path):
    """Read a checkpoint written by save_params; byte-exact round-trip."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[: len(CHECKPOINT_MAGIC)] != CHECKPOINT_MAGIC:
        raise ParseError(f"{path}: not a parameter checkpoint (bad magic)")
    off = len(CHECKPOINT_MAGIC)
    if len(raw) < off + 6:
        raise ParseError(f"{path}: truncated checkpoint header")
    (version,) = struct.unpack_from("<H", raw, off)
    if version != CHECKPOINT_VERSION:
        raise ParseError(f"{path}: unsupported checkpoint version {version}")
    off += 2
    (manifest_len,) = struct.unpack_from("<I", raw, off)
    off += 4
    if len(raw) < off + manifest_len:
        raise ParseError(f"{path}: truncated manifest")
    try:
        manifest = json.loads(raw[off : off + manifest_len].decode("utf-8"))
        arch = ArchConfig.from_dict(manifest["arch"])
        entries = [(str(n), tuple(int(s) for s in shape)) for n, shape in manifest["params"]]
    except (ValueError, KeyError, TypeError) as exc:
        raise ParseError(f"{path}: invalid manifest: {exc}") from None
    off += manifest_len
    tensors = {}
    for name, shape in entries:
        n = int(np.prod(shape)) if shape else 1
        nbytes = n * 8
        if len(raw) < off + nbytes:
            raise ParseError(f"{path}: truncated data for parameter {name}")
        data = np.frombuffer(raw, dtype="<f8", count=n, offset=off).reshape(shape)
        tensors[name] = Tensor(data.astype(np.float64), requires_grad=True)
        off += nbytes
    if off != len(raw):
        raise ParseError(f"{path}: {len(raw) - off} trailing bytes")
    params = ModelParams(arch, tensors)
    expected = [name for name, _ in _param_specs(arch)]
    if params.names() != expected:
        raise ParseError(f"{path}: parameter names do not match the architecture")
    return params
