"""Two-branch alignment model over precomputed embeddings.

The audio-visual branch encodes concat(v, a) and projects it to a joint
space; the text branch encodes concat(w_v, w_a) and projects the result to
the same space; two decoders map both projections back to the encoder
width for the reconstruction objective. All eight blocks are
Linear -> BatchNorm -> ReLU -> Dropout units from :mod:`avgzsl.nn`.

Checkpoint files are a versioned binary: an 8-byte magic, a little-endian
uint32 format version, a uint32 JSON-header length, the UTF-8 JSON header
(dims, switches, seed), then the raw little-endian float32 blocks in a
fixed order (weight, bias, gamma, beta, running_mean, running_var per
block). Round trips are bit-exact.
"""

from __future__ import annotations

import copy
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import nn
from .errors import ConfigError, DataError, FormatError
from .nn import FFBlockParams, Mode

LOSS_TERMS = ("ce", "rec", "reg")
BLOCK_ORDER = ("o_enc", "o_proj1", "o_proj2", "w_enc", "w_proj",
               "d_o1", "d_o2", "d_w")
_BLOCK_FIELDS = ("weight", "bias", "gamma", "beta",
                 "running_mean", "running_var")

CHECKPOINT_MAGIC = b"AVGZSLCK"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class ModelDims:
    d_in_a: int = 1024
    d_in_v: int = 512
    d_model: int = 512
    d_hidden: int = 512
    d_out: int = 64
    dropout_rate: float = 0.1

    def __post_init__(self):
        for name in ("d_in_a", "d_in_v", "d_model", "d_hidden", "d_out"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")

    def to_dict(self) -> dict:
        return {
            "d_in_a": self.d_in_a, "d_in_v": self.d_in_v,
            "d_model": self.d_model, "d_hidden": self.d_hidden,
            "d_out": self.d_out, "dropout_rate": self.dropout_rate,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModelDims":
        return cls(**d)


@dataclass(frozen=True)
class AblationSwitches:
    """Which label embeddings, input modalities, and loss terms are active.

    Single-modality runs pair the audio feature with the audio-language
    label embedding (or visual with vision-language), so `modality` other
    than "both" forces the matching `label_embedding`.
    """

    label_embedding: str = "both"  # both | clip | clap
    modality: str = "both"  # both | audio | visual
    loss_terms: frozenset = frozenset(LOSS_TERMS)

    def __post_init__(self):
        if self.label_embedding not in ("both", "clip", "clap"):
            raise ConfigError(
                f"label_embedding must be both/clip/clap, got "
                f"{self.label_embedding!r}")
        if self.modality not in ("both", "audio", "visual"):
            raise ConfigError(
                f"modality must be both/audio/visual, got {self.modality!r}")
        terms = frozenset(self.loss_terms)
        object.__setattr__(self, "loss_terms", terms)
        if not terms:
            raise ConfigError("loss_terms must be nonempty")
        unknown = terms - set(LOSS_TERMS)
        if unknown:
            raise ConfigError(f"unknown loss terms: {sorted(unknown)}")
        required = {"audio": "clap", "visual": "clip"}.get(self.modality)
        if required and self.label_embedding != required:
            raise ConfigError(
                f"modality={self.modality!r} pairs with "
                f"label_embedding={required!r}, got {self.label_embedding!r}")

    @property
    def use_visual(self) -> bool:
        return self.modality in ("both", "visual")

    @property
    def use_audio(self) -> bool:
        return self.modality in ("both", "audio")

    @property
    def use_clip_text(self) -> bool:
        return self.label_embedding in ("both", "clip")

    @property
    def use_clap_text(self) -> bool:
        return self.label_embedding in ("both", "clap")

    def to_dict(self) -> dict:
        return {
            "label_embedding": self.label_embedding,
            "modality": self.modality,
            "loss_terms": sorted(self.loss_terms),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "AblationSwitches":
        d = dict(d)
        if "loss_terms" in d:
            d["loss_terms"] = frozenset(d["loss_terms"])
        return cls(**d)


def av_input_dim(dims: ModelDims, switches: AblationSwitches) -> int:
    return (dims.d_in_v if switches.use_visual else 0) + \
           (dims.d_in_a if switches.use_audio else 0)


def text_input_dim(dims: ModelDims, switches: AblationSwitches) -> int:
    return (dims.d_in_v if switches.use_clip_text else 0) + \
           (dims.d_in_a if switches.use_clap_text else 0)


@dataclass
class ModelParams:
    dims: ModelDims
    switches: AblationSwitches
    seed: int
    o_enc: FFBlockParams
    o_proj1: FFBlockParams
    o_proj2: FFBlockParams
    w_enc: FFBlockParams
    w_proj: FFBlockParams
    d_o1: FFBlockParams
    d_o2: FFBlockParams
    d_w: FFBlockParams

    def block(self, name: str) -> FFBlockParams:
        return getattr(self, name)

    def parameters(self) -> dict:
        """Learnable arrays keyed '<block>.<field>', shared (not copied)."""
        out = {}
        for name in BLOCK_ORDER:
            b = self.block(name)
            out[f"{name}.weight"] = b.affine.weight
            out[f"{name}.bias"] = b.affine.bias
            out[f"{name}.gamma"] = b.bn.gamma
            out[f"{name}.beta"] = b.bn.beta
        return out

    def param_count(self) -> int:
        return sum(int(p.size) for p in self.parameters().values())

    def clone(self) -> "ModelParams":
        return copy.deepcopy(self)

    def astype(self, dtype) -> "ModelParams":
        """Deep copy with every array cast to `dtype` (for gradient checks)."""
        out = self.clone()
        for name in BLOCK_ORDER:
            b = out.block(name)
            b.affine.weight = b.affine.weight.astype(dtype)
            b.affine.bias = b.affine.bias.astype(dtype)
            b.bn.gamma = b.bn.gamma.astype(dtype)
            b.bn.beta = b.bn.beta.astype(dtype)
            b.bn.running_mean = b.bn.running_mean.astype(dtype)
            b.bn.running_var = b.bn.running_var.astype(dtype)
        return out


def init_params(dims: ModelDims, switches: AblationSwitches, seed: int,
                dtype=np.float32) -> ModelParams:
    """Seeded init: weights uniform +/- sqrt(1/fan_in), zero bias,
    gamma=1, beta=0, running stats at (0, 1)."""
    rng = np.random.default_rng(seed)
    widths = {
        "o_enc": (av_input_dim(dims, switches), dims.d_model),
        "o_proj1": (dims.d_model, dims.d_hidden),
        "o_proj2": (dims.d_hidden, dims.d_out),
        "w_enc": (text_input_dim(dims, switches), dims.d_model),
        "w_proj": (dims.d_model, dims.d_out),
        "d_o1": (dims.d_out, dims.d_hidden),
        "d_o2": (dims.d_hidden, dims.d_model),
        "d_w": (dims.d_out, dims.d_model),
    }
    blocks = {
        name: nn.init_ff_block(rng, i, o, dims.dropout_rate, dtype)
        for name, (i, o) in widths.items()
    }
    return ModelParams(dims=dims, switches=switches, seed=seed, **blocks)


# ---------------------------------------------------------------------------
# forward


@dataclass
class Batch:
    """One mini-batch; labels index rows of the class table passed along."""

    visual: Optional[np.ndarray]  # (B, d_in_v) or None under audio-only
    audio: Optional[np.ndarray]  # (B, d_in_a) or None under visual-only
    labels: np.ndarray  # (B,) rows into the class table


@dataclass
class ClassTable:
    """Per-class text embeddings; either table may be absent under ablation."""

    clip: Optional[np.ndarray]  # (C, d_in_v)
    clap: Optional[np.ndarray]  # (C, d_in_a)

    @property
    def num_classes(self) -> int:
        t = self.clip if self.clip is not None else self.clap
        return t.shape[0]


@dataclass
class ForwardTrace:
    o: np.ndarray  # (B, d_model)
    theta_o: np.ndarray  # (B, d_out)
    w: np.ndarray  # (C, d_model)
    theta_w: np.ndarray  # (C, d_out)
    rho_o: np.ndarray  # (B, d_model)
    rho_w: np.ndarray  # (C, d_model)
    gt_rows: np.ndarray  # (B,) rows into the class-table axis
    caches: dict = field(default_factory=dict, repr=False)


def _concat(parts) -> np.ndarray:
    parts = [p for p in parts if p is not None]
    if not parts:
        raise ConfigError("no input modalities enabled")
    if len(parts) == 1:
        return parts[0]
    return np.concatenate(parts, axis=1)


def _check_width(x: np.ndarray, block: FFBlockParams, what: str):
    expected = block.affine.in_dim
    if x.shape[1] != expected:
        raise ConfigError(
            f"{what}: expected input width {expected}, got {x.shape[1]}")


def _encode_av(v, a, params: ModelParams, mode: Mode, rng):
    x = _concat((v, a))  # visual first
    _check_width(x, params.o_enc, "audio-visual encoder")
    return nn.ff_block(x, params.o_enc, mode, rng)


def _project_output(o, params: ModelParams, mode: Mode, rng):
    h, c1 = nn.ff_block(o, params.o_proj1, mode, rng)
    theta_o, c2 = nn.ff_block(h, params.o_proj2, mode, rng)
    return theta_o, (c1, c2)


def _encode_text(w_v, w_a, params: ModelParams, mode: Mode, rng):
    x = _concat((w_v, w_a))  # vision-language embedding first
    _check_width(x, params.w_enc, "text encoder")
    return nn.ff_block(x, params.w_enc, mode, rng)


def _project_text(w, params: ModelParams, mode: Mode, rng):
    return nn.ff_block(w, params.w_proj, mode, rng)


def _decode(theta_o, theta_w, params: ModelParams, mode: Mode, rng):
    u, c1 = nn.ff_block(theta_o, params.d_o1, mode, rng)
    rho_o, c2 = nn.ff_block(u, params.d_o2, mode, rng)
    rho_w, cw = nn.ff_block(theta_w, params.d_w, mode, rng)
    return rho_o, rho_w, (c1, c2, cw)


def encode_audio_visual(v, a, params: ModelParams, mode: Mode, rng=None):
    return _encode_av(v, a, params, mode, rng)[0]


def project_output(o, params: ModelParams, mode: Mode, rng=None):
    return _project_output(o, params, mode, rng)[0]


def encode_text(w_v, w_a, params: ModelParams, mode: Mode, rng=None):
    return _encode_text(w_v, w_a, params, mode, rng)[0]


def project_text(w, params: ModelParams, mode: Mode, rng=None):
    return _project_text(w, params, mode, rng)[0]


def decode(theta_o, theta_w, params: ModelParams, mode: Mode, rng=None):
    rho_o, rho_w, _ = _decode(theta_o, theta_w, params, mode, rng)
    return rho_o, rho_w


def forward_batch(batch: Batch, table: ClassTable, params: ModelParams,
                  mode: Mode, rng=None) -> ForwardTrace:
    """Run the full graph once. The text branch covers every row of the
    class table (all seen classes during training), not just the batch's
    classes.
    """
    sw = params.switches
    labels = np.asarray(batch.labels)
    n_classes = table.num_classes
    if labels.size and (labels.min() < 0 or labels.max() >= n_classes):
        raise DataError(
            f"batch labels reference rows outside the class table "
            f"(table has {n_classes} rows, labels span "
            f"[{labels.min()}, {labels.max()}])")
    v = batch.visual if sw.use_visual else None
    a = batch.audio if sw.use_audio else None
    w_v = table.clip if sw.use_clip_text else None
    w_a = table.clap if sw.use_clap_text else None

    o, c_oenc = _encode_av(v, a, params, mode, rng)
    theta_o, (c_op1, c_op2) = _project_output(o, params, mode, rng)
    w, c_wenc = _encode_text(w_v, w_a, params, mode, rng)
    theta_w, c_wproj = _project_text(w, params, mode, rng)
    rho_o, rho_w, (c_do1, c_do2, c_dw) = _decode(
        theta_o, theta_w, params, mode, rng)
    caches = {
        "o_enc": c_oenc, "o_proj1": c_op1, "o_proj2": c_op2,
        "w_enc": c_wenc, "w_proj": c_wproj,
        "d_o1": c_do1, "d_o2": c_do2, "d_w": c_dw,
    }
    return ForwardTrace(o=o, theta_o=theta_o, w=w, theta_w=theta_w,
                        rho_o=rho_o, rho_w=rho_w, gt_rows=labels,
                        caches=caches)


@dataclass
class TraceGrads:
    """Gradients of a scalar loss w.r.t. the public trace tensors."""

    theta_o: np.ndarray
    theta_w: np.ndarray
    rho_o: np.ndarray
    rho_w: np.ndarray
    w: np.ndarray

    @classmethod
    def zeros_like(cls, trace: ForwardTrace) -> "TraceGrads":
        return cls(
            theta_o=np.zeros_like(trace.theta_o),
            theta_w=np.zeros_like(trace.theta_w),
            rho_o=np.zeros_like(trace.rho_o),
            rho_w=np.zeros_like(trace.rho_w),
            w=np.zeros_like(trace.w),
        )


def backward_batch(trace: ForwardTrace, tg: TraceGrads,
                   params: ModelParams) -> dict:
    """Propagate trace-level gradients to every learnable parameter.

    Returns a dict keyed like ModelParams.parameters(). Gradients
    accumulate at the shared tensors: theta_w feeds the losses and the
    d_w decoder, w feeds w_proj and the reconstruction target.
    """
    caches = trace.caches
    grads = {}

    def back(name, g):
        dx, block_grads = nn.ff_block_backward(
            g, caches[name], params.block(name))
        for k, v in block_grads.items():
            grads[f"{name}.{k}"] = v
        return dx

    d_theta_o = tg.theta_o.copy()
    d_theta_w = tg.theta_w.copy()
    d_theta_w += back("d_w", tg.rho_w)
    d_u = back("d_o2", tg.rho_o)
    d_theta_o += back("d_o1", d_u)

    d_w_total = tg.w.copy()
    d_w_total += back("w_proj", d_theta_w)
    back("w_enc", d_w_total)

    d_h = back("o_proj2", d_theta_o)
    d_o = back("o_proj1", d_h)
    back("o_enc", d_o)
    return grads


# ---------------------------------------------------------------------------
# checkpoints


def save_checkpoint(params: ModelParams, path) -> None:
    path = Path(path)
    header = {
        "format_version": CHECKPOINT_VERSION,
        "dims": params.dims.to_dict(),
        "switches": params.switches.to_dict(),
        "seed": params.seed,
        "dtype": "float32",
    }
    header_bytes = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as f:
        f.write(CHECKPOINT_MAGIC)
        f.write(struct.pack("<I", CHECKPOINT_VERSION))
        f.write(struct.pack("<I", len(header_bytes)))
        f.write(header_bytes)
        for name in BLOCK_ORDER:
            b = params.block(name)
            for arr in (b.affine.weight, b.affine.bias, b.bn.gamma,
                        b.bn.beta, b.bn.running_mean, b.bn.running_var):
                f.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())


def load_checkpoint(path, expect_dims: Optional[ModelDims] = None,
                    expect_switches: Optional[AblationSwitches] = None
                    ) -> ModelParams:
    path = Path(path)
    with open(path, "rb") as f:
        blob = f.read()
    if blob[:8] != CHECKPOINT_MAGIC:
        raise FormatError(f"{path}: not a checkpoint file (bad magic)")
    version, = struct.unpack("<I", blob[8:12])
    if version != CHECKPOINT_VERSION:
        raise FormatError(
            f"{path}: unsupported checkpoint version {version} "
            f"(expected {CHECKPOINT_VERSION})")
    hlen, = struct.unpack("<I", blob[12:16])
    try:
        header = json.loads(blob[16:16 + hlen].decode("utf-8"))
        dims = ModelDims.from_dict(header["dims"])
        switches = AblationSwitches.from_dict(header["switches"])
        seed = header["seed"]
    except (ValueError, KeyError, TypeError) as exc:
        raise FormatError(f"{path}: malformed checkpoint header: {exc}")
    if expect_dims is not None and dims != expect_dims:
        raise FormatError(
            f"{path}: checkpoint dims {dims.to_dict()} do not match "
            f"expected {expect_dims.to_dict()}")
    if expect_switches is not None and switches != expect_switches:
        raise FormatError(
            f"{path}: checkpoint switches {switches.to_dict()} do not "
            f"match expected {expect_switches.to_dict()}")

    params = init_params(dims, switches, seed)
    offset = 16 + hlen
    for name in BLOCK_ORDER:
        b = params.block(name)
        for field_name in _BLOCK_FIELDS:
            if field_name == "weight":
                target_shape = b.affine.weight.shape
            elif field_name == "bias":
                target_shape = b.affine.bias.shape
            else:
                target_shape = getattr(b.bn, field_name).shape
            count = int(np.prod(target_shape))
            nbytes = count * 4
            chunk = blob[offset:offset + nbytes]
            if len(chunk) != nbytes:
                raise FormatError(
                    f"{path}: truncated checkpoint, block '{name}.{field_name}'"
                    f" needs {nbytes} bytes, found {len(chunk)}")
            arr = np.frombuffer(chunk, dtype="<f4").reshape(target_shape).copy()
            if field_name == "weight":
                b.affine.weight = arr
            elif field_name == "bias":
                b.affine.bias = arr
            else:
                setattr(b.bn, field_name, arr)
            offset += nbytes
    if offset != len(blob):
        raise FormatError(
            f"{path}: {len(blob) - offset} trailing bytes after parameter "
            f"blocks")
    return params
