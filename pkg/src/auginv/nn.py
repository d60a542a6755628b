"""Dense ReLU networks, AdamW with cosine annealing, cross-entropy, and
checkpoint serialization. Training loops live in ``trainer``.
"""

from __future__ import annotations

import json
import struct
import zlib
from dataclasses import dataclass, field

import numpy as np

from . import tape
from .core import RngStream
from .errors import CorruptFileError, InvalidConfigError, InvalidInputError, NumericalError


class Mlp:
    """Dense network with ReLU between layers and a linear last layer.

    Parameters live in ``params`` as ``W{i}`` with shape (out, in) and
    ``b{i}`` with shape (out,). Initialization is seeded Kaiming-style
    uniform with fan-in scaling; biases start at zero.
    """

    kind = "mlp"

    def __init__(self, dims: list[int], rng: RngStream | None = None):
        if len(dims) < 2 or any(d < 1 for d in dims):
            raise InvalidConfigError(f"bad layer dims {dims}")
        self.dims = list(dims)
        self.params: dict[str, np.ndarray] = {}
        for i, (d_in, d_out) in enumerate(zip(dims[:-1], dims[1:])):
            bound = np.sqrt(6.0 / d_in)
            if rng is None:
                w = np.zeros((d_out, d_in))
            else:
                w = rng.child(f"W{i}").uniform(-bound, bound, size=(d_out, d_in))
            self.params[f"W{i}"] = w
            self.params[f"b{i}"] = np.zeros(d_out)

    @property
    def d_in(self) -> int:
        return self.dims[0]

    @property
    def d_out(self) -> int:
        return self.dims[-1]

    @property
    def n_layers(self) -> int:
        return len(self.dims) - 1

    def forward(self, x: np.ndarray) -> np.ndarray:
        h = np.asarray(x, dtype=np.float64)
        if h.ndim != 2 or h.shape[1] != self.d_in:
            raise InvalidInputError(
                f"expected (n, {self.d_in}) input, got {h.shape}"
            )
        for i in range(self.n_layers):
            h = h @ self.params[f"W{i}"].T + self.params[f"b{i}"]
            if i < self.n_layers - 1:
                h = np.maximum(h, 0.0)
        return h

    def param_tensors(self) -> dict[str, tape.Tensor]:
        return {k: tape.param(v) for k, v in self.params.items()}

    def forward_graph(self, pt: dict[str, tape.Tensor], x) -> tape.Tensor:
        h = tape.wrap(x)
        if h.value.shape[1] != self.d_in:
            raise InvalidInputError(
                f"expected (n, {self.d_in}) input, got {h.value.shape}"
            )
        for i in range(self.n_layers):
            h = tape.affine(h, pt[f"W{i}"], pt[f"b{i}"])
            if i < self.n_layers - 1:
                h = tape.relu(h)
        return h

    def grads_from(self, pt: dict[str, tape.Tensor]) -> dict[str, np.ndarray]:
        return {
            k: (t.grad if t.grad is not None else np.zeros_like(t.value))
            for k, t in pt.items()
        }


class AdapterMlp(Mlp):
    """One-hidden-layer adapter appended to a frozen feature space."""

    kind = "adapter"

    def __init__(self, d_in: int, d_hidden: int, d_out: int, rng: RngStream | None = None):
        super().__init__([d_in, d_hidden, d_out], rng)


class DecoderMlp(Mlp):
    """Mirror of the adapter mapping codes back to the input space."""

    kind = "decoder"

    def __init__(self, d_in: int, d_hidden: int, d_out: int, rng: RngStream | None = None):
        super().__init__([d_in, d_hidden, d_out], rng)


PROBE_KINDS = ("linear", "nonlinear", "end_to_end")


class ProbeHead(Mlp):
    """Classifier head: linear (d, k), nonlinear (d, h, k), or end-to-end
    (d, h, h, k) used without an adapter."""

    kind = "probe"

    def __init__(self, probe_kind: str, d: int, k: int, hidden: int = 512,
                 rng: RngStream | None = None):
        if probe_kind not in PROBE_KINDS:
            raise InvalidConfigError(f"unknown probe kind {probe_kind!r}")
        dims = {
            "linear": [d, k],
            "nonlinear": [d, hidden, k],
            "end_to_end": [d, hidden, hidden, k],
        }[probe_kind]
        super().__init__(dims, rng)
        self.probe_kind = probe_kind
        self.n_classes = k

    def predict(self, x: np.ndarray) -> np.ndarray:
        return np.argmax(self.forward(x), axis=1)


# --- optimizer and schedule ------------------------------------------------


@dataclass
class AdamWState:
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    step: int = 0


def adamw_step(params: dict[str, np.ndarray], grads: dict[str, np.ndarray],
               state: AdamWState, lr: float, weight_decay: float,
               beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8) -> None:
    """In-place AdamW update with decoupled weight decay and bias correction."""
    if lr <= 0:
        raise InvalidConfigError("lr must be positive")
    for k, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise NumericalError(f"non-finite gradient for parameter {k!r}")
    state.step += 1
    t = state.step
    for k, p in params.items():
        g = grads[k]
        m = state.m.setdefault(k, np.zeros_like(p))
        v = state.v.setdefault(k, np.zeros_like(p))
        m += (1 - beta1) * (g - m)
        v += (1 - beta2) * (g * g - v)
        m_hat = m / (1 - beta1 ** t)
        v_hat = v / (1 - beta2 ** t)
        if weight_decay:
            p -= lr * weight_decay * p
        p -= lr * m_hat / (np.sqrt(v_hat) + eps)
        if not np.all(np.isfinite(p)):
            raise NumericalError(f"parameter {k!r} became non-finite")


def cosine_lr(step: int, total_steps: int, lr_max: float, lr_min: float) -> float:
    """Per-step cosine from lr_max (step 0) to lr_min (last step)."""
    if total_steps <= 1:
        return lr_max
    frac = step / (total_steps - 1)
    return lr_min + 0.5 * (lr_max - lr_min) * (1.0 + np.cos(np.pi * frac))


def cross_entropy(logits: np.ndarray, labels: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean negative log-softmax of the true class; returns (loss, dlogits)."""
    logits = np.asarray(logits, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    n, k = logits.shape
    if labels.shape != (n,):
        raise InvalidInputError("labels shape mismatch")
    if np.any(labels < 0) or np.any(labels >= k):
        raise InvalidInputError(f"labels outside [0, {k})")
    shifted = logits - logits.max(axis=1, keepdims=True)
    logp = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    loss = float(-logp[np.arange(n), labels].mean())
    grad = np.exp(logp)
    grad[np.arange(n), labels] -= 1.0
    return loss, grad / n


# --- checkpoint I/O --------------------------------------------------------

CHECKPOINT_MAGIC = b"AIMK"
CHECKPOINT_VERSION = 1

_NET_CLASSES = {"adapter": AdapterMlp, "decoder": DecoderMlp, "probe": ProbeHead, "mlp": Mlp}


def _describe(net: Mlp) -> dict:
    desc = {"kind": net.kind, "dims": net.dims}
    if isinstance(net, ProbeHead):
        desc["probe_kind"] = net.probe_kind
        desc["n_classes"] = net.n_classes
    return desc


def _rebuild(desc: dict) -> Mlp:
    kind = desc["kind"]
    dims = desc["dims"]
    if kind == "probe":
        hidden = dims[1] if len(dims) > 2 else 1
        net = ProbeHead(desc["probe_kind"], dims[0], dims[-1], hidden=hidden)
        net.dims = dims
    elif kind == "adapter":
        net = AdapterMlp(dims[0], dims[1], dims[2])
    elif kind == "decoder":
        net = DecoderMlp(dims[0], dims[1], dims[2])
    else:
        net = Mlp(dims)
    return net


def save_checkpoint(path, nets: dict[str, Mlp], metadata: dict | None = None) -> None:
    """Versioned binary checkpoint: magic, version, JSON descriptor, f64
    little-endian parameter blocks, trailing CRC32."""
    descriptor = {
        "nets": {name: _describe(net) for name, net in nets.items()},
        "metadata": metadata or {},
    }
    desc_bytes = json.dumps(descriptor, sort_keys=True).encode()
    buf = bytearray()
    buf += CHECKPOINT_MAGIC
    buf += struct.pack("<I", CHECKPOINT_VERSION)
    buf += struct.pack("<I", len(desc_bytes))
    buf += desc_bytes
    for name in sorted(nets):
        net = nets[name]
        for key in sorted(net.params):
            buf += np.ascontiguousarray(net.params[key], dtype="<f8").tobytes()
    buf += struct.pack("<I", zlib.crc32(bytes(buf)) & 0xFFFFFFFF)
    with open(path, "wb") as fh:
        fh.write(bytes(buf))


def load_checkpoint(path) -> tuple[dict[str, Mlp], dict]:
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < 12 or raw[:4] != CHECKPOINT_MAGIC:
        raise CorruptFileError(f"bad checkpoint magic at offset 0 in {path}")
    stored_crc = struct.unpack("<I", raw[-4:])[0]
    if zlib.crc32(raw[:-4]) & 0xFFFFFFFF != stored_crc:
        raise CorruptFileError(f"checkpoint CRC mismatch in {path}")
    version = struct.unpack("<I", raw[4:8])[0]
    if version != CHECKPOINT_VERSION:
        raise CorruptFileError(f"unsupported checkpoint version {version}")
    desc_len = struct.unpack("<I", raw[8:12])[0]
    try:
        descriptor = json.loads(raw[12:12 + desc_len].decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CorruptFileError(f"unreadable checkpoint descriptor: {exc}") from exc
    offset = 12 + desc_len
    nets: dict[str, Mlp] = {}
    for name in sorted(descriptor["nets"]):
        net = _rebuild(descriptor["nets"][name])
        for key in sorted(net.params):
            shape = net.params[key].shape
            nbytes = int(np.prod(shape)) * 8
            if offset + nbytes > len(raw) - 4:
                raise CorruptFileError(
                    f"checkpoint truncated at offset {offset} in {path}"
                )
            net.params[key] = np.frombuffer(
                raw[offset:offset + nbytes], dtype="<f8"
            ).reshape(shape).copy()
            offset += nbytes
        nets[name] = net
    if offset != len(raw) - 4:
        raise CorruptFileError("checkpoint has trailing garbage")
    return nets, descriptor["metadata"]
