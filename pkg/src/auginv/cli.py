"""Command-line entry point.

Subcommands: gen-synth (procedural dataset emission), train (adapter
training), eval (probe + structure + collision report with figures),
collision (collision rates on stored augmentations), grad-check (finite
difference verification of loss gradients).

Exit codes: 0 success, 2 usage/configuration error, 3 training collapse,
1 internal error. Every command is deterministic given its config and seed.
The AIFT_THREADS environment variable caps internal linear-algebra
parallelism (default: all cores).
"""

from __future__ import annotations

import argparse
import copy
import json
import os
import subprocess
import sys
import zlib
from pathlib import Path

import numpy as np

from . import data, evaluate, figures, gradcheck, losses, nn, ot, trainer
from .augment import standard_ensemble
from .core import RngStream
from .errors import (
    AuginvError,
    CollapseError,
    CorruptFileError,
    DegenerateSampleError,
    InvalidConfigError,
    InvalidInputError,
)

SCHEMA_VERSION = 1

CLI_LOSS_NAMES = ("mawa", "waco", "waco-recon", "simclr", "hsic")
PROBE_KINDS = {"lc": "linear", "nc": "nonlinear", "ec": "end_to_end"}

DEFAULT_CONFIG = {
    "schema_version": SCHEMA_VERSION,
    "train": {
        "batch_size": 256, "epochs": 100, "learning_rate": 1e-3,
        "weight_decay": 1e-4, "lr_min": 4e-4, "seed": 0, "hidden": 512,
        "adapter_out": None, "probe_epochs": 50, "probe_weight_decay": 0.0,
    },
    "loss": {
        "kind": "mawa", "s": 3, "alpha": 1.0, "beta": 1.0,
        "temperature": 0.5, "hsic_bandwidth": "median",
    },
    "ot": {
        "p": 2, "num_projections": 128, "shuffle_both": True,
        "epsilon_guard": 1e-8, "num_shuffles": 1,
    },
    "aug": {"name": "identity"},
    "eval": {"num_projections": 1024, "pair_budget": 2_000_000},
    "dataset": None,
    "out_dir": None,
}


# --- configuration ---------------------------------------------------------


def load_run_config(path: str | None) -> dict:
    """JSON config merged over full defaults; unknown keys rejected at every
    level so typos fail loudly."""
    cfg = copy.deepcopy(DEFAULT_CONFIG)
    if path is None:
        return cfg
    try:
        with open(path) as fh:
            user = json.load(fh)
    except json.JSONDecodeError as exc:
        raise InvalidConfigError(f"malformed JSON in {path}: {exc}") from exc
    if not isinstance(user, dict):
        raise InvalidConfigError("config root must be a JSON object")
    for key, value in user.items():
        if key not in cfg:
            raise InvalidConfigError(f"unknown config key {key!r}")
        if isinstance(cfg[key], dict):
            if not isinstance(value, dict):
                raise InvalidConfigError(f"config section {key!r} must be an object")
            for sub, sval in value.items():
                if sub not in cfg[key]:
                    raise InvalidConfigError(f"unknown config key {key}.{sub}")
                cfg[key][sub] = sval
        else:
            cfg[key] = value
    if cfg["schema_version"] != SCHEMA_VERSION:
        raise InvalidConfigError(
            f"unsupported config schema_version {cfg['schema_version']}"
        )
    return cfg


def build_train_config(cfg: dict) -> trainer.TrainConfig:
    loss_cfg = losses.LossConfig(ot=ot.OtConfig(**cfg["ot"]), **cfg["loss"])
    return trainer.TrainConfig(loss=loss_cfg, **cfg["train"])


def _loss_to_internal(name: str) -> str:
    return name.replace("-", "_")


# --- shared helpers --------------------------------------------------------


def apply_thread_cap() -> int | None:
    """Honor AIFT_THREADS by capping BLAS thread pools (best effort)."""
    raw = os.environ.get("AIFT_THREADS")
    if not raw:
        return None
    try:
        cap = int(raw)
        if cap < 1:
            raise ValueError
    except ValueError:
        raise InvalidConfigError(f"AIFT_THREADS must be a positive integer, got {raw!r}")
    try:
        import threadpoolctl

        threadpoolctl.threadpool_limits(cap)
    except ImportError:
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
            os.environ[var] = str(cap)
    return cap


def _git_describe() -> str:
    try:
        out = subprocess.run(
            ["git", "describe", "--always", "--dirty"],
            capture_output=True, text=True, timeout=10,
            cwd=Path(__file__).resolve().parent,
        )
        if out.returncode == 0:
            return out.stdout.strip()
    except OSError:
        pass
    return "unknown"


def write_run_metadata(out_dir: Path, command: str, cfg: dict,
                       extra: dict | None = None) -> None:
    meta = {
        "schema_version": SCHEMA_VERSION,
        "command": command,
        "config": cfg,
        "git_describe": _git_describe(),
        "aift_threads": os.environ.get("AIFT_THREADS"),
    }
    if extra:
        meta.update(extra)
    with open(out_dir / "run_metadata.json", "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_dataset(path: str):
    """Directory with an IDX pair -> ImageDataset; .aift file -> FeatureDataset."""
    p = Path(path)
    if p.is_dir():
        images, labels = p / "images.idx", p / "labels.idx"
        if not images.exists() or not labels.exists():
            raise InvalidInputError(f"no images.idx/labels.idx pair under {p}")
        return data.load_idx(images, labels)
    if not p.exists():
        raise InvalidInputError(f"dataset not found: {p}")
    if p.suffix == ".aift":
        return data.load_aift(p)
    raise InvalidInputError(
        f"unrecognized dataset {p}: expected a directory or an .aift file"
    )


def _require_feature_dataset(ds, what: str) -> data.FeatureDataset:
    if not isinstance(ds, data.FeatureDataset):
        raise InvalidInputError(
            f"{what} needs a feature dataset (.aift) with stored augmentations"
        )
    return ds


# --- gen-synth -------------------------------------------------------------


def cmd_gen_synth(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rng = RngStream(args.seed)
    ds = data.gen_shapes(args.n, args.classes, args.size, args.jitter,
                         rng.child("shapes"))
    data.save_idx(ds, out / "images.idx", out / "labels.idx")
    written = {"images.idx": _crc(out / "images.idx"),
               "labels.idx": _crc(out / "labels.idx")}

    if args.features:
        flat_dim = ds.flat_dim
        proj = rng.child("projection").normal(
            size=(args.features, flat_dim)) / np.sqrt(flat_dim)
        feature_map = lambda x: x @ proj.T  # noqa: E731
        ensemble = standard_ensemble(args.aug, args.s_file)
        batch = data.make_batch(ds, np.arange(ds.n), ensemble, args.s_file,
                                rng.child("export"), feature_map=feature_map)
        fds = data.FeatureDataset(
            batch.clean, ds.labels, batch.aug, args.s_file,
            metadata=json.dumps({
                "source": "gen-synth", "aug": args.aug, "seed": args.seed,
                "projection_dim": args.features,
            }, sort_keys=True),
        )
        data.save_aift(fds, out / "features.aift")
        written["features.aift"] = _crc(out / "features.aift")

    meta = {
        "schema_version": SCHEMA_VERSION,
        "generator": {
            "classes": args.classes, "n_per_class": args.n, "size": args.size,
            "jitter": args.jitter, "seed": args.seed, "aug": args.aug,
            "s_file": args.s_file, "features": args.features,
        },
        "checksums_crc32": written,
    }
    with open(out / "metadata.json", "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(f"wrote {', '.join(sorted(written))} to {out}")
    return 0


def _crc(path: Path) -> int:
    return zlib.crc32(path.read_bytes()) & 0xFFFFFFFF


# --- train -----------------------------------------------------------------


def cmd_train(args) -> int:
    cfg = load_run_config(args.config)
    if args.loss:
        cfg["loss"]["kind"] = _loss_to_internal(args.loss)
    if args.aug:
        cfg["aug"]["name"] = args.aug
    if args.dataset:
        cfg["dataset"] = args.dataset
    if args.out:
        cfg["out_dir"] = args.out
    if args.seed is not None:
        cfg["train"]["seed"] = args.seed
    if args.epochs is not None:
        cfg["train"]["epochs"] = args.epochs
    if args.batch_size is not None:
        cfg["train"]["batch_size"] = args.batch_size
    if args.hidden is not None:
        cfg["train"]["hidden"] = args.hidden
    if args.s is not None:
        cfg["loss"]["s"] = args.s
    if cfg["dataset"] is None:
        raise InvalidConfigError("no dataset given (--dataset or config)")
    if cfg["out_dir"] is None:
        raise InvalidConfigError("no output directory given (--out or config)")

    tcfg = build_train_config(cfg)
    ds = load_dataset(cfg["dataset"])
    ensemble = standard_ensemble(cfg["aug"]["name"], tcfg.loss.s)
    out = Path(cfg["out_dir"])
    out.mkdir(parents=True, exist_ok=True)

    adapter, decoder, history = trainer.train_adapter(ds, ensemble, tcfg)
    nets = {"adapter": adapter}
    if decoder is not None:
        nets["decoder"] = decoder
    nn.save_checkpoint(out / "checkpoint.aimk", nets, {
        "loss": tcfg.loss.kind, "seed": tcfg.seed, "aug": cfg["aug"]["name"],
    })
    with open(out / "history.json", "w") as fh:
        json.dump(history, fh, indent=2, sort_keys=True)
        fh.write("\n")
    write_run_metadata(out, "train", cfg)
    print(f"trained {tcfg.loss.kind} adapter for {tcfg.epochs} epochs; "
          f"final loss {history['epoch_loss'][-1]:.6g}; artifacts in {out}")
    return 0


# --- eval ------------------------------------------------------------------


def cmd_eval(args) -> int:
    cfg = load_run_config(args.config)
    if args.seed is not None:
        cfg["train"]["seed"] = args.seed
    ckpt_path = Path(args.checkpoint)
    if not ckpt_path.exists():
        raise InvalidInputError(f"checkpoint not found: {ckpt_path}")
    nets, ckpt_meta = nn.load_checkpoint(ckpt_path)
    adapter = nets.get("adapter")
    if adapter is None:
        raise InvalidInputError("checkpoint has no adapter network")
    ds = _require_feature_dataset(load_dataset(args.dataset), "eval")
    if adapter.d_in != ds.dim:
        raise InvalidConfigError(
            f"adapter expects dim {adapter.d_in} but dataset has dim {ds.dim}"
        )

    tcfg = build_train_config(cfg)
    probe_kind = PROBE_KINDS[args.probe]
    use_adapter = args.probe != "ec"
    clean_in = adapter.forward(ds.clean) if use_adapter else ds.clean
    aug_in = adapter.forward(ds.aug) if use_adapter else ds.aug

    probe = trainer.train_probe(clean_in, ds.labels, probe_kind, tcfg)
    pair = evaluate.probe_pair_accuracy(
        probe, None, clean_in, aug_in, ds.labels, ds.aug_source_idx(),
        loss_kind=str(ckpt_meta.get("loss", "")),
    )
    structure = None
    if use_adapter:
        structure = evaluate.structure_report(
            adapter, ds.clean, pair_budget=cfg["eval"]["pair_budget"],
            rng=RngStream(tcfg.seed).child("eval/pairs"),
        )
    collision = evaluate.aligned_collision_rate(
        clean_in, ds.labels, aug_in, ds.aug_source_idx()
    )

    report = evaluate.report_dict(
        pair=pair, structure=structure, collision=collision,
        extra={
            "schema_version": SCHEMA_VERSION,
            "probe": args.probe,
            "loss_kind": str(ckpt_meta.get("loss", "")),
            "dataset": str(args.dataset),
            "acc_pair": f"{pair.clean_acc:.2f}/{pair.aug_acc:.2f}",
        },
    )
    report_path = Path(args.report)
    report_path.parent.mkdir(parents=True, exist_ok=True)
    evaluate.write_report(report_path, report)

    out_dir = report_path.parent
    csv_path = out_dir / f"{report_path.stem}_embeddings.csv"
    csv_path.unlink(missing_ok=True)
    evaluate.write_embeddings_csv(csv_path, clean_in, ds.labels, "clean")
    evaluate.write_embeddings_csv(csv_path, aug_in,
                                  ds.labels[ds.aug_source_idx()], "aug")
    if structure is not None:
        figures.save_structure_scatter(
            out_dir / f"{report_path.stem}_structure.png", ds.clean, clean_in,
            structure, rng=RngStream(tcfg.seed).child("eval/figure"),
        )
    figures.save_embedding_scatter(
        out_dir / f"{report_path.stem}_embedding.png", clean_in, ds.labels,
        title=f"{args.probe} / {report['loss_kind']}",
    )
    write_run_metadata(out_dir, "eval", cfg, extra={
        "checkpoint": str(ckpt_path), "probe": args.probe,
        "report": str(report_path),
    })
    print(f"{args.probe} accuracy {report['acc_pair']} "
          f"(cr_raw {collision.cr_raw:.4f}, cr_aligned {collision.cr_aligned:.4f}); "
          f"report at {report_path}")
    return 0


# --- collision -------------------------------------------------------------


def cmd_collision(args) -> int:
    ds = _require_feature_dataset(load_dataset(args.dataset), "collision")
    src = ds.aug_source_idx()
    if args.aligned:
        rep = evaluate.aligned_collision_rate(ds.clean, ds.labels, ds.aug, src)
        report = {"cr_raw": rep.cr_raw, "cr_aligned": rep.cr_aligned,
                  "alignment_residual": rep.alignment_residual}
    else:
        report = {"cr_raw": evaluate.collision_rate(ds.clean, ds.labels,
                                                    ds.aug, src)}
    report["schema_version"] = SCHEMA_VERSION
    line = json.dumps(report, indent=2, sort_keys=True)
    print(line)
    if args.report:
        Path(args.report).parent.mkdir(parents=True, exist_ok=True)
        with open(args.report, "w") as fh:
            fh.write(line + "\n")
    return 0


# --- grad-check ------------------------------------------------------------


def cmd_grad_check(args) -> int:
    kinds = ([_loss_to_internal(args.loss)] if args.loss
             else list(gradcheck.LOSS_KINDS))
    results, passed = gradcheck.run_suite(kinds, seed=args.seed,
                                          tolerance=args.tolerance)
    for kind, err in results.items():
        status = "PASS" if err < args.tolerance else "FAIL"
        print(f"{kind}: max relative error {err:.3e} [{status}]")
    return 0 if passed else 1


# --- parser ----------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="auginv",
        description="Train and evaluate augmentation-invariant feature adapters.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-synth", help="generate a procedural shape dataset")
    g.add_argument("--classes", type=int, default=4)
    g.add_argument("--n", type=int, default=100, help="samples per class")
    g.add_argument("--size", type=int, default=28, help="image side length")
    g.add_argument("--jitter", type=float, default=0.05)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)
    g.add_argument("--features", type=int, default=0,
                   help="also write features.aift via a frozen random "
                        "projection of this dimension")
    g.add_argument("--aug", default="identity",
                   help="augmentation applied for the stored feature block")
    g.add_argument("--s-file", type=int, default=3, dest="s_file")
    g.set_defaults(func=cmd_gen_synth)

    t = sub.add_parser("train", help="train an adapter network")
    t.add_argument("--config", help="JSON run configuration")
    t.add_argument("--loss", choices=CLI_LOSS_NAMES)
    t.add_argument("--aug")
    t.add_argument("--dataset")
    t.add_argument("--out")
    t.add_argument("--seed", type=int)
    t.add_argument("--epochs", type=int)
    t.add_argument("--batch-size", type=int, dest="batch_size")
    t.add_argument("--hidden", type=int)
    t.add_argument("--s", type=int)
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="train a probe and write the report")
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--dataset", required=True)
    e.add_argument("--probe", choices=sorted(PROBE_KINDS), default="lc")
    e.add_argument("--report", required=True, help="output JSON path")
    e.add_argument("--config")
    e.add_argument("--seed", type=int)
    e.set_defaults(func=cmd_eval)

    c = sub.add_parser("collision", help="collision rates on stored augmentations")
    c.add_argument("--dataset", required=True)
    c.add_argument("--aligned", action="store_true")
    c.add_argument("--report")
    c.set_defaults(func=cmd_collision)

    k = sub.add_parser("grad-check", help="finite-difference gradient verification")
    k.add_argument("--loss", choices=CLI_LOSS_NAMES)
    k.add_argument("--seed", type=int, default=0)
    k.add_argument("--tolerance", type=float, default=gradcheck.DEFAULT_TOLERANCE)
    k.set_defaults(func=cmd_grad_check)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        apply_thread_cap()
        return args.func(args)
    except (InvalidConfigError, InvalidInputError, DegenerateSampleError,
            CorruptFileError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except CollapseError as exc:
        print(f"training collapse: {exc}", file=sys.stderr)
        return 3
    except AuginvError as exc:
        print(f"internal error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
