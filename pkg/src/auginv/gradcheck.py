"""Central finite-difference verification of the analytic loss gradients.

Each loss is evaluated at small sizes; every parameter entry is perturbed
by +-h and the numeric gradient is compared against the returned analytic
one, block by block, as a norm-relative error. Stochastic losses replay the
same labeled substream on every evaluation so the sampled projections and
shuffles are identical across perturbations.
"""

from __future__ import annotations

import numpy as np

from . import losses, nn, ot
from .core import RngStream
from .errors import InvalidConfigError

LOSS_KINDS = ("mawa", "waco", "waco_recon", "simclr", "hsic")
DEFAULT_TOLERANCE = 1e-4
_H = 1e-5


def _make_setup(kind: str, seed: int):
    rng = RngStream(seed).child(f"gradcheck/{kind}")
    n, s, d_in, hidden = 6, 2, 5, 8
    d_out = d_in if kind in ("mawa",) else 4
    adapter = nn.AdapterMlp(d_in, hidden, d_out, rng.child("adapter"))
    decoder = None
    if kind == "waco_recon":
        decoder = nn.DecoderMlp(d_out, hidden, d_in, rng.child("decoder"))
    clean = rng.child("clean").normal(size=(n, d_in))
    aug = clean.repeat(s, axis=0) + 0.3 * rng.child("aug").normal(size=(n * s, d_in))
    batch = losses.AugmentedBatch(clean, aug, s, raw=clean.copy())
    cfg = losses.LossConfig(
        kind=kind, s=s, hsic_bandwidth=1.0,
        ot=ot.OtConfig(num_projections=16),
    )
    return adapter, decoder, batch, cfg, rng


def _evaluate(kind, adapter, decoder, batch, cfg, rng) -> losses.LossResult:
    draw = rng.child("draw")  # fresh stream with a fixed path: same draws
    if kind == "mawa":
        return losses.mawa_loss(adapter, batch)
    if kind == "waco":
        return losses.waco_loss(adapter, batch, cfg, draw)
    if kind == "waco_recon":
        return losses.waco_recon_loss(adapter, decoder, batch, cfg, draw)
    if kind == "simclr":
        return losses.simclr_loss(adapter, batch, cfg)
    if kind == "hsic":
        return losses.hsic_loss(adapter, batch, cfg)
    raise InvalidConfigError(f"unknown loss kind {kind!r}")


def check_loss_gradients(kind: str, seed: int = 0, h: float = _H) -> float:
    """Max norm-relative error between analytic and central-difference
    gradients over all parameter blocks of all networks in the loss."""
    adapter, decoder, batch, cfg, rng = _make_setup(kind, seed)
    base = _evaluate(kind, adapter, decoder, batch, cfg, rng)
    nets = {"adapter": adapter}
    if decoder is not None:
        nets["decoder"] = decoder
    worst = 0.0
    for net_name, net in nets.items():
        analytic = base.grads[net_name]
        for pname, p in net.params.items():
            numeric = np.zeros_like(p)
            flat = p.ravel()
            num_flat = numeric.ravel()
            for idx in range(flat.size):
                orig = flat[idx]
                flat[idx] = orig + h
                up = _evaluate(kind, adapter, decoder, batch, cfg, rng).value
                flat[idx] = orig - h
                down = _evaluate(kind, adapter, decoder, batch, cfg, rng).value
                flat[idx] = orig
                num_flat[idx] = (up - down) / (2 * h)
            a = analytic[pname]
            # Floor at 1e-6: for blocks with an exactly-zero true gradient
            # (e.g. final bias under shift-invariant losses) both sides are
            # pure noise, and absolute agreement below the floor counts.
            denom = max(float(np.linalg.norm(a)), float(np.linalg.norm(numeric)),
                        1e-6)
            worst = max(worst, float(np.linalg.norm(a - numeric)) / denom)
    return worst


def run_suite(kinds=LOSS_KINDS, seed: int = 0,
              tolerance: float = DEFAULT_TOLERANCE):
    """Returns ({kind: max_rel_err}, all_passed)."""
    results = {kind: check_loss_gradients(kind, seed) for kind in kinds}
    return results, all(err < tolerance for err in results.values())
