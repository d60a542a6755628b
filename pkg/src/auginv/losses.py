"""The five training objectives as differentiable scalar functions of the
network parameters over an augmented batch.

mawa: anchored MSE pulling encoded clean/augmented features to the clean
anchor. waco / waco_recon: negated sliced Wasserstein correlation of the
joint induced by the augmented encoder (plus an optional reconstruction
term). simclr / hsic: baseline objectives for comparison.

Everything is built on the reverse-mode tape; sort and shuffle permutations
are constants in the backward pass. The library always minimizes, so waco
returns the negated correlation.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from . import ot, tape
from .core import RngStream, as_matrix, sample_unit_directions
from .errors import InvalidConfigError, InvalidInputError
from .nn import AdapterMlp, DecoderMlp, Mlp

LOSS_KINDS = ("mawa", "waco", "waco_recon", "simclr", "hsic")


@dataclass
class LossConfig:
    kind: str = "mawa"
    s: int = 3
    alpha: float = 1.0
    beta: float = 1.0
    temperature: float = 0.5
    hsic_bandwidth: float | str = "median"  # "median" or a fixed positive value
    ot: ot.OtConfig = field(default_factory=ot.OtConfig)

    def __post_init__(self):
        if self.kind not in LOSS_KINDS:
            raise InvalidConfigError(f"unknown loss kind {self.kind!r}")
        if self.s < 0:
            raise InvalidConfigError("s must be >= 0")
        if self.temperature <= 0:
            raise InvalidConfigError("temperature must be positive")
        if self.alpha < 0 or self.beta < 0:
            raise InvalidConfigError("alpha and beta must be >= 0")
        if not isinstance(self.hsic_bandwidth, str) and self.hsic_bandwidth <= 0:
            raise InvalidConfigError("hsic_bandwidth must be positive")


@dataclass
class AugmentedBatch:
    """Clean features plus s augmented features per input, grouped so rows
    [i*s, (i+1)*s) of ``aug`` belong to input i."""

    clean: np.ndarray            # (N, d)
    aug: np.ndarray              # (N*s, d)
    s: int
    raw: np.ndarray | None = None     # (N, d_in) reconstruction targets
    labels: np.ndarray | None = None  # carried for evaluation, unused here

    def __post_init__(self):
        self.clean = as_matrix(self.clean, "clean")
        n = self.clean.shape[0]
        self.aug = as_matrix(self.aug, "aug") if self.s > 0 else np.zeros((0, self.clean.shape[1]))
        if self.aug.shape != (n * self.s, self.clean.shape[1]):
            raise InvalidInputError(
                f"aug block must be ({n * self.s}, {self.clean.shape[1]}), "
                f"got {self.aug.shape}"
            )

    @property
    def n(self) -> int:
        return self.clean.shape[0]

    def all_rows(self) -> np.ndarray:
        """Clean rows followed by the grouped augmented rows."""
        return np.concatenate([self.clean, self.aug], axis=0)

    def anchors(self) -> np.ndarray:
        """Per-row clean anchor for ``all_rows`` ordering."""
        return np.concatenate(
            [self.clean, np.repeat(self.clean, self.s, axis=0)], axis=0
        )


@dataclass
class LossResult:
    value: float
    grads: dict[str, dict[str, np.ndarray]]
    collapsed: bool = False
    extras: dict = field(default_factory=dict)


def _zero_grads(net: Mlp) -> dict[str, np.ndarray]:
    return {k: np.zeros_like(v) for k, v in net.params.items()}


# --- mawa ------------------------------------------------------------------


def mawa_loss(adapter: AdapterMlp, batch: AugmentedBatch) -> LossResult:
    """Anchored MSE: (1/N) sum_i (1/(s+1)) [ ||E(c_i) - c_i||^2 +
    sum_k ||E(a_i^k) - c_i||^2 ]."""
    if adapter.d_out != adapter.d_in:
        raise InvalidConfigError(
            "mawa requires an adapter mapping the feature space to itself"
        )
    if adapter.d_in != batch.clean.shape[1]:
        raise InvalidConfigError(
            f"adapter expects dim {adapter.d_in}, batch has {batch.clean.shape[1]}"
        )
    pt = adapter.param_tensors()
    z = adapter.forward_graph(pt, batch.all_rows())
    resid = tape.sub(z, tape.wrap(batch.anchors()))
    scale = 1.0 / (batch.n * (batch.s + 1))
    loss = tape.mul(tape.tsum(tape.square(resid)), tape.wrap(scale))
    tape.backward(loss)
    return LossResult(float(loss.value), {"adapter": adapter.grads_from(pt)})


# --- differentiable sliced machinery ---------------------------------------


def _sw_from_projections(proj_a: tape.Tensor, proj_b: tape.Tensor, p: int) -> tape.Tensor:
    """Order-p sliced dependence contribution (mean 1D W_p^p, no final root,
    matching ot.sliced_dependence) from already-projected (n, L) value
    matrices; the sort permutations are taken from the forward values and
    held fixed."""
    pi = np.argsort(proj_a.value, axis=0)
    qi = np.argsort(proj_b.value, axis=0)
    diff = tape.sub(tape.take_along_cols(proj_a, pi), tape.take_along_cols(proj_b, qi))
    if p == 2:
        return tape.tmean(tape.square(diff))
    return tape.tmean(tape.absolute(diff))


def _sd_anchor_code_graph(anchors: np.ndarray, z: tape.Tensor,
                          cfg: ot.OtConfig, rng: RngStream) -> tape.Tensor:
    """Differentiable sliced dependence of the joint (anchor_i, z_i); mirrors
    ot.sliced_dependence draw-for-draw so forward values agree exactly."""
    n, dx = anchors.shape
    dz = z.value.shape[1]
    shuffles = ot.draw_shuffles(n, cfg, rng)
    vals = []
    for j, (sx, sz) in enumerate(shuffles):
        dirs = sample_unit_directions(rng.child(f"proj{j}"), cfg.num_projections, dx + dz)
        tx, tz = dirs[:, :dx].T, dirs[:, dx:].T
        pj = tape.add(tape.wrap(anchors @ tx), tape.matmul(z, tape.wrap(tz)))
        qj = tape.add(
            tape.wrap(anchors[sx] @ tx),
            tape.matmul(tape.take_rows(z, sz), tape.wrap(tz)),
        )
        vals.append(_sw_from_projections(pj, qj, cfg.p))
    total = vals[0]
    for v in vals[1:]:
        total = tape.add(total, v)
    return tape.mul(total, tape.wrap(1.0 / len(vals)))


def _sd_code_diagonal_graph(z: tape.Tensor, cfg: ot.OtConfig,
                            rng: RngStream) -> tape.Tensor:
    """Differentiable sliced dependence of the diagonal joint (z_i, z_i)."""
    n, dz = z.value.shape
    shuffles = ot.draw_shuffles(n, cfg, rng)
    vals = []
    for j, (sx, sz) in enumerate(shuffles):
        dirs = sample_unit_directions(rng.child(f"proj{j}"), cfg.num_projections, 2 * dz)
        t1, t2 = dirs[:, :dz].T, dirs[:, dz:].T
        pj = tape.matmul(z, tape.wrap(t1 + t2))
        qj = tape.add(
            tape.matmul(tape.take_rows(z, sx), tape.wrap(t1)),
            tape.matmul(tape.take_rows(z, sz), tape.wrap(t2)),
        )
        vals.append(_sw_from_projections(pj, qj, cfg.p))
    total = vals[0]
    for v in vals[1:]:
        total = tape.add(total, v)
    return tape.mul(total, tape.wrap(1.0 / len(vals)))


def _neg_sliced_correlation_graph(anchors: np.ndarray, z: tape.Tensor,
                                  cfg: ot.OtConfig, rng: RngStream):
    """Negated SC of the joint (anchor, code); returns (node | None, info).

    The anchor diagonal term carries no gradient and is computed with the
    plain estimator. Returns None when a marginal has collapsed.
    """
    sd_joint = _sd_anchor_code_graph(anchors, z, cfg, rng.child("joint"))
    sd_x = ot.sliced_dependence(
        np.concatenate([anchors, anchors], axis=1), anchors.shape[1],
        cfg, rng.child("xdiag"),
    )
    sd_z = _sd_code_diagonal_graph(z, cfg, rng.child("zdiag"))
    if sd_x < cfg.epsilon_guard or float(sd_z.value) < cfg.epsilon_guard:
        return None, {"sc": 0.0, "collapsed": True}
    denom = tape.power(
        tape.add(tape.mul(sd_z, tape.wrap(sd_x)), tape.wrap(cfg.epsilon_guard)),
        -1.0 / cfg.p,
    )
    sc = tape.mul(sd_joint, denom)
    neg = tape.mul(sc, tape.wrap(-1.0))
    return neg, {"sc": float(sc.value), "collapsed": False}


# --- waco ------------------------------------------------------------------


def waco_loss(adapter: Mlp, batch: AugmentedBatch, cfg: LossConfig,
              rng: RngStream) -> LossResult:
    """Negated sliced Wasserstein correlation of the empirical joint of
    (anchor_i, E(view)) rows, the clean view included."""
    if batch.n < 2:
        raise InvalidInputError("waco needs at least 2 inputs per batch")
    pt = adapter.param_tensors()
    z = adapter.forward_graph(pt, batch.all_rows())
    node, info = _neg_sliced_correlation_graph(batch.anchors(), z, cfg.ot, rng)
    if node is None:
        warnings.warn("waco: collapsed code marginal, returning zero loss")
        return LossResult(0.0, {"adapter": _zero_grads(adapter)},
                          collapsed=True, extras=info)
    tape.backward(node)
    return LossResult(float(node.value), {"adapter": adapter.grads_from(pt)},
                      extras=info)


def waco_recon_loss(adapter: Mlp, decoder: DecoderMlp, batch: AugmentedBatch,
                    cfg: LossConfig, rng: RngStream) -> LossResult:
    """alpha * reconstruction MSE + beta * negated-SC term."""
    if batch.raw is None:
        raise InvalidConfigError("waco_recon needs raw inputs in the batch")
    if batch.n < 2:
        raise InvalidInputError("waco_recon needs at least 2 inputs per batch")
    raw = as_matrix(batch.raw, "raw")
    if decoder.d_out != raw.shape[1]:
        raise InvalidConfigError(
            f"decoder output dim {decoder.d_out} != raw input dim {raw.shape[1]}"
        )
    a_pt = adapter.param_tensors()
    d_pt = decoder.param_tensors()
    z = adapter.forward_graph(a_pt, batch.all_rows())
    z_clean = tape.take_rows(z, np.arange(batch.n))
    recon = tape.mul(
        tape.tsum(tape.square(tape.sub(decoder.forward_graph(d_pt, z_clean),
                                       tape.wrap(raw)))),
        tape.wrap(1.0 / batch.n),
    )
    node, info = _neg_sliced_correlation_graph(batch.anchors(), z, cfg.ot, rng)
    if node is None:
        warnings.warn("waco_recon: collapsed code marginal; only the "
                      "reconstruction term contributes this step")
        loss = tape.mul(recon, tape.wrap(cfg.alpha))
        collapsed = True
    else:
        loss = tape.add(tape.mul(recon, tape.wrap(cfg.alpha)),
                        tape.mul(node, tape.wrap(cfg.beta)))
        collapsed = False
    tape.backward(loss)
    info["recon"] = float(recon.value)
    return LossResult(
        float(loss.value),
        {"adapter": adapter.grads_from(a_pt), "decoder": decoder.grads_from(d_pt)},
        collapsed=collapsed, extras=info,
    )


# --- simclr ----------------------------------------------------------------


def simclr_loss(adapter: Mlp, batch: AugmentedBatch, cfg: LossConfig) -> LossResult:
    """NT-Xent over the (s+1)N encoded views: all views of one input are
    mutual positives, every other non-self view is a negative."""
    if batch.s < 1:
        raise InvalidConfigError("simclr needs s >= 1 (no positives otherwise)")
    if batch.n < 2:
        raise InvalidInputError("simclr needs at least 2 inputs per batch")
    n, s = batch.n, batch.s
    m = (s + 1) * n
    groups = np.concatenate([np.arange(n), np.repeat(np.arange(n), s)])
    pos_mask = (groups[:, None] == groups[None, :]).astype(np.float64)
    np.fill_diagonal(pos_mask, 0.0)
    self_block = np.zeros((m, m))
    np.fill_diagonal(self_block, -1e9)

    pt = adapter.param_tensors()
    z = adapter.forward_graph(pt, batch.all_rows())
    vn = tape.row_normalize(z)
    sim = tape.mul(tape.matmul(vn, tape.transpose(vn)), tape.wrap(1.0 / cfg.temperature))
    masked = tape.add(sim, tape.wrap(self_block))
    lse = tape.logsumexp_rows(masked)
    pos_sum = tape.tsum(tape.mul(sim, tape.wrap(pos_mask)))
    loss = tape.mul(
        tape.sub(tape.mul(tape.tsum(lse), tape.wrap(float(s))), pos_sum),
        tape.wrap(1.0 / (m * s)),
    )
    tape.backward(loss)
    return LossResult(float(loss.value), {"adapter": adapter.grads_from(pt)})


# --- hsic ------------------------------------------------------------------


def _median_bandwidth(points: np.ndarray) -> float:
    d2 = np.sum((points[:, None, :] - points[None, :, :]) ** 2, axis=2)
    tri = d2[np.triu_indices_from(d2, k=1)]
    positive = tri[tri > 0]
    if positive.size == 0:
        warnings.warn("hsic: all pairwise distances zero, falling back to "
                      "bandwidth 1.0")
        return 1.0
    return float(np.sqrt(np.median(positive)))


def hsic_loss(adapter: Mlp, batch: AugmentedBatch, cfg: LossConfig) -> LossResult:
    """Negated biased HSIC, -Tr(KHLH)/(M-1)^2, between the anchors and the
    encoded views; gradients flow through the view kernel only."""
    if batch.n < 2:
        raise InvalidInputError("hsic needs at least 2 inputs per batch")
    anchors = batch.anchors()
    m = anchors.shape[0]
    if isinstance(cfg.hsic_bandwidth, str):
        sigma_x = _median_bandwidth(anchors)
    else:
        sigma_x = float(cfg.hsic_bandwidth)
    d2x = np.sum((anchors[:, None, :] - anchors[None, :, :]) ** 2, axis=2)
    kx = np.exp(-d2x / (2.0 * sigma_x ** 2))
    h = np.eye(m) - np.ones((m, m)) / m
    hkh = h @ kx @ h

    pt = adapter.param_tensors()
    z = adapter.forward_graph(pt, batch.all_rows())
    if isinstance(cfg.hsic_bandwidth, str):
        sigma_z = _median_bandwidth(z.value)
    else:
        sigma_z = float(cfg.hsic_bandwidth)
    r2 = tape.tsum(tape.square(z), axis=1, keepdims=True)
    d2z = tape.add(
        tape.add(r2, tape.transpose(r2)),
        tape.mul(tape.matmul(z, tape.transpose(z)), tape.wrap(-2.0)),
    )
    lk = tape.exp(tape.mul(d2z, tape.wrap(-1.0 / (2.0 * sigma_z ** 2))))
    hsic = tape.mul(tape.tsum(tape.mul(lk, tape.wrap(hkh))),
                    tape.wrap(1.0 / (m - 1) ** 2))
    loss = tape.mul(hsic, tape.wrap(-1.0))
    tape.backward(loss)
    return LossResult(float(loss.value), {"adapter": adapter.grads_from(pt)},
                      extras={"hsic": float(hsic.value),
                              "sigma_x": sigma_x, "sigma_z": sigma_z})
