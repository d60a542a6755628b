"""Training loops for adapter networks and classifier probes.

A run is a pure function of (dataset, ensemble, config): every random choice
comes from substreams keyed by (epoch, step, purpose), so same-seed reruns
produce bit-identical parameters.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import data, losses, nn, tape
from .augment import AugmentationEnsemble
from .core import RngStream
from .errors import CollapseError, DegenerateSampleError, InvalidConfigError

COLLAPSE_EPOCH_LIMIT = 10


@dataclass
class TrainConfig:
    batch_size: int = 256
    epochs: int = 100
    learning_rate: float = 1e-3
    weight_decay: float = 1e-4
    lr_min: float = 4e-4
    seed: int = 0
    hidden: int = 512
    adapter_out: int | None = None   # None: same as input dim (required for mawa)
    loss: losses.LossConfig = field(default_factory=losses.LossConfig)
    probe_epochs: int = 50
    probe_weight_decay: float = 0.0

    def __post_init__(self):
        for name in ("batch_size", "epochs", "learning_rate", "lr_min",
                     "hidden", "probe_epochs"):
            if getattr(self, name) <= 0:
                raise InvalidConfigError(f"{name} must be positive")
        if self.weight_decay < 0 or self.probe_weight_decay < 0:
            raise InvalidConfigError("weight decay must be >= 0")


def _feature_dim(dataset, feature_map) -> int:
    if isinstance(dataset, data.FeatureDataset):
        return dataset.dim
    flat = dataset.flat_dim
    if feature_map is None:
        return flat
    return feature_map(np.zeros((1, flat))).shape[1]


def _epoch_batches(n: int, batch_size: int, order: np.ndarray, keep_partial: bool):
    for start in range(0, n, batch_size):
        idx = order[start:start + batch_size]
        if idx.size < batch_size and not keep_partial:
            return
        if idx.size < 2 and not keep_partial:
            return
        yield idx


def _compute_loss(kind, adapter, decoder, batch, loss_cfg, rng):
    if kind == "mawa":
        return losses.mawa_loss(adapter, batch)
    if kind == "waco":
        return losses.waco_loss(adapter, batch, loss_cfg, rng)
    if kind == "waco_recon":
        return losses.waco_recon_loss(adapter, decoder, batch, loss_cfg, rng)
    if kind == "simclr":
        return losses.simclr_loss(adapter, batch, loss_cfg)
    return losses.hsic_loss(adapter, batch, loss_cfg)


def train_adapter(dataset, ensemble: AugmentationEnsemble, cfg: TrainConfig,
                  feature_map=None):
    """Train the adapter (and decoder for waco_recon) on the configured loss
    with AdamW and per-step cosine annealing.

    Returns (adapter, decoder-or-None, history). history carries per-epoch
    mean loss and, for the waco losses, the raw correlation score.
    """
    kind = cfg.loss.kind
    s = cfg.loss.s
    if s == 0 and kind not in ("mawa", "waco", "waco_recon"):
        raise InvalidConfigError(f"s=0 is not meaningful for {kind}")
    root = RngStream(cfg.seed)
    d_in = _feature_dim(dataset, feature_map)
    d_out = d_in if cfg.adapter_out is None else cfg.adapter_out
    if kind == "mawa" and d_out != d_in:
        raise InvalidConfigError("mawa requires adapter_out == input dim")
    adapter = nn.AdapterMlp(d_in, cfg.hidden, d_out, root.child("init/adapter"))
    decoder = None
    if kind == "waco_recon":
        decoder = nn.DecoderMlp(d_out, cfg.hidden, d_in, root.child("init/decoder"))

    n = dataset.n
    keep_partial = kind == "mawa"
    order_probe = np.arange(n)
    steps_per_epoch = sum(
        1 for _ in _epoch_batches(n, cfg.batch_size, order_probe, keep_partial)
    )
    if steps_per_epoch == 0:
        raise DegenerateSampleError("dataset too small for one batch")
    total_steps = steps_per_epoch * cfg.epochs

    opt_adapter = nn.AdamWState()
    opt_decoder = nn.AdamWState()
    history = {"epoch_loss": [], "epoch_sc": [], "config": _history_config(cfg),
               "collapse_epochs": 0}
    global_step = 0
    consecutive_collapse = 0
    for epoch in range(cfg.epochs):
        ep = root.child(f"epoch{epoch}")
        order = ep.child("order").permutation(n)
        epoch_losses = []
        epoch_scs = []
        epoch_collapsed = True
        for step, idx in enumerate(
            _epoch_batches(n, cfg.batch_size, order, keep_partial)
        ):
            st = ep.child(f"step{step}")
            batch = data.make_batch(
                dataset, idx, ensemble, s, st.child("aug"),
                feature_map=feature_map, with_raw=(kind == "waco_recon"),
            )
            result = _compute_loss(kind, adapter, decoder, batch, cfg.loss,
                                   st.child("loss"))
            lr = nn.cosine_lr(global_step, total_steps, cfg.learning_rate, cfg.lr_min)
            nn.adamw_step(adapter.params, result.grads["adapter"], opt_adapter,
                          lr, cfg.weight_decay)
            if decoder is not None and "decoder" in result.grads:
                nn.adamw_step(decoder.params, result.grads["decoder"], opt_decoder,
                              lr, cfg.weight_decay)
            epoch_losses.append(result.value)
            if "sc" in result.extras:
                epoch_scs.append(result.extras["sc"])
            if not result.collapsed:
                epoch_collapsed = False
            global_step += 1
        history["epoch_loss"].append(float(np.mean(epoch_losses)))
        if epoch_scs:
            history["epoch_sc"].append(float(np.mean(epoch_scs)))
        if kind in ("waco", "waco_recon") and epoch_collapsed:
            consecutive_collapse += 1
            history["collapse_epochs"] += 1
            if consecutive_collapse > COLLAPSE_EPOCH_LIMIT:
                raise CollapseError(
                    f"waco output collapsed for {consecutive_collapse} "
                    "consecutive epochs"
                )
        else:
            consecutive_collapse = 0
    return adapter, decoder, history


def _history_config(cfg: TrainConfig) -> dict:
    return {
        "batch_size": cfg.batch_size, "epochs": cfg.epochs,
        "learning_rate": cfg.learning_rate, "weight_decay": cfg.weight_decay,
        "lr_min": cfg.lr_min, "seed": cfg.seed, "hidden": cfg.hidden,
        "loss": cfg.loss.kind, "s": cfg.loss.s,
        "num_projections": cfg.loss.ot.num_projections,
        "shuffle_both": cfg.loss.ot.shuffle_both,
        "p": cfg.loss.ot.p,
        "init": "kaiming-uniform-fanin",
    }


def train_probe(features: np.ndarray, labels: np.ndarray, kind: str,
                cfg: TrainConfig, hidden: int | None = None) -> nn.ProbeHead:
    """Train a classifier head on frozen features with cross-entropy, Adam
    (no weight decay by default), and cosine annealing."""
    features = np.asarray(features, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    n, d = features.shape
    k = int(labels.max()) + 1
    if len(np.unique(labels)) < 2:
        raise DegenerateSampleError("probe training needs at least 2 classes")
    root = RngStream(cfg.seed).child(f"probe/{kind}")
    probe = nn.ProbeHead(kind, d, k, hidden=hidden or cfg.hidden,
                         rng=root.child("init"))
    batch = min(cfg.batch_size, n)
    steps_per_epoch = max(1, n // batch)
    total_steps = steps_per_epoch * cfg.probe_epochs
    state = nn.AdamWState()
    global_step = 0
    for epoch in range(cfg.probe_epochs):
        order = root.child(f"epoch{epoch}").permutation(n)
        for step in range(steps_per_epoch):
            idx = order[step * batch:(step + 1) * batch]
            pt = probe.param_tensors()
            logits = probe.forward_graph(pt, features[idx])
            _, dlogits = nn.cross_entropy(logits.value, labels[idx])
            tape.backward(logits, seed=dlogits)
            lr = nn.cosine_lr(global_step, total_steps, cfg.learning_rate, cfg.lr_min)
            nn.adamw_step(probe.params, probe.grads_from(pt), state, lr,
                          cfg.probe_weight_decay)
            global_step += 1
    return probe
