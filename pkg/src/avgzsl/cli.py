"""Command-line front end.

Subcommands: synth, train, evaluate, search-calibration,
export-embeddings, inspect. Machine-readable results go to files, a short
human summary to stdout, diagnostics to stderr. Exit codes: 0 success,
1 usage or configuration error, 2 data/format error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import difflib
import json
import sys
from pathlib import Path

import numpy as np

from . import data, evalkit, model, report as report_mod, trainer
from .data import Split, Stage, SynthSpec
from .errors import (ConfigError, DataError, DimensionError, EngineError,
                     NumericError, ProtocolError, UsageError)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _build_parser() -> _Parser:
    parser = _Parser(prog="avgzsl", description=__doc__)
    sub = parser.add_subparsers(dest="command", metavar="command",
                                parser_class=_Parser)

    p = sub.add_parser("synth",
                       help="generate a synthetic feature archive")
    p.add_argument("--spec", help="JSON file with SynthSpec overrides")
    p.add_argument("--out", required=True, help="archive directory to write")
    p.add_argument("--seed", type=int, help="override the generator seed")

    p = sub.add_parser("train",
                       help="run the two-stage protocol and write a report")
    p.add_argument("--config", required=True, help="protocol config JSON")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--archive", help="override the config's archive path")
    p.add_argument("--lr", type=float, help="override the learning rate")
    p.add_argument("--epochs", type=int, help="override epochs_stage1")
    p.add_argument("--batch-size", type=int, help="override the batch size")
    p.add_argument("--seed", type=int,
                   help="set init/shuffle/dropout seeds to seed, seed+1, "
                        "seed+2")
    p.add_argument("--quiet", action="store_true",
                   help="suppress per-epoch progress lines")

    p = sub.add_parser("evaluate",
                       help="evaluate a checkpoint on the val or test split")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--archive", required=True)
    p.add_argument("--gamma", type=float, default=0.0,
                   help="calibration penalty (default 0 = disabled)")
    p.add_argument("--split", choices=("val", "test"), default="test")
    p.add_argument("--out", help="directory for report.json and CSV")

    p = sub.add_parser("search-calibration",
                       help="grid-search the calibration penalty")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--archive", required=True)
    p.add_argument("--split", choices=("val", "test"), default="val")
    p.add_argument("--step", type=float, default=0.07)
    p.add_argument("--limit", type=float, default=5.0)
    p.add_argument("--out", help="directory for sweep CSV/JSON and figure")

    p = sub.add_parser("export-embeddings",
                       help="write joint-space embeddings for external "
                            "visualization")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--archive", required=True)
    p.add_argument("--split", choices=("val", "test"), default="test")
    p.add_argument("--out", required=True)

    p = sub.add_parser("inspect",
                       help="print an archive's manifest summary")
    p.add_argument("--archive", required=True)
    return parser


def _known_flags(parser: argparse.ArgumentParser) -> set:
    flags = set()
    for action in parser._actions:
        flags.update(action.option_strings)
        if isinstance(action, argparse._SubParsersAction):
            for sub in action.choices.values():
                flags.update(_known_flags(sub))
    return flags


def _suggest(message: str, parser: _Parser) -> str:
    # attach a suggestion when an unknown flag looks like a known one
    if "unrecognized arguments:" in message:
        bad = message.split("unrecognized arguments:")[1].strip().split()
        known = sorted(_known_flags(parser))
        hints = []
        for token in bad:
            if token.startswith("-"):
                close = difflib.get_close_matches(token, known, n=1)
                if close:
                    hints.append(f"did you mean {close[0]}?")
        if hints:
            return message + " (" + " ".join(hints) + ")"
    return message


def _stage_for_split(split: str) -> Stage:
    return Stage.ONE if split == "val" else Stage.TWO


def _load_checkpoint_for_archive(ckpt_path, archive):
    params = model.load_checkpoint(ckpt_path)
    if (params.dims.d_in_a != archive.d_in_a
            or params.dims.d_in_v != archive.d_in_v):
        raise ConfigError(
            f"checkpoint dims (d_in_a={params.dims.d_in_a}, "
            f"d_in_v={params.dims.d_in_v}) do not match archive "
            f"(d_in_a={archive.d_in_a}, d_in_v={archive.d_in_v})")
    return params


def _cmd_synth(args) -> int:
    overrides = {}
    if args.spec:
        try:
            overrides = json.loads(Path(args.spec).read_text(encoding="utf-8"))
        except OSError as exc:
            raise DataError(f"cannot read spec file: {exc}")
        except ValueError as exc:
            raise ConfigError(f"{args.spec}: invalid JSON: {exc}")
    if args.seed is not None:
        overrides["seed"] = args.seed
    spec = SynthSpec.from_dict(overrides)
    archive = data.synth_generate(spec)
    data.write_archive(archive, args.out)
    print(f"wrote synthetic archive to {args.out}: "
          f"{archive.num_samples} samples, {archive.num_classes} classes, "
          f"d_in_a={archive.d_in_a} d_in_v={archive.d_in_v}")
    return EXIT_OK


def _cmd_train(args) -> int:
    config = trainer.ProtocolConfig.from_json_file(args.config)
    updates = {}
    if args.archive:
        updates["archive"] = args.archive
    if args.lr is not None:
        updates["lr"] = args.lr
    if args.epochs is not None:
        updates["epochs_stage1"] = args.epochs
    if args.batch_size is not None:
        updates["batch_size"] = args.batch_size
    if args.seed is not None:
        updates.update(init_seed=args.seed, shuffle_seed=args.seed + 1,
                       dropout_seed=args.seed + 2)
    if updates:
        config = trainer.ProtocolConfig.from_dict(
            {**config.to_dict(), **updates})

    def progress(entry):
        if entry["stage"] == 1:
            print(f"stage 1 epoch {entry['epoch']:3d}  "
                  f"loss {entry['l_total']:.4f}  "
                  f"val HM {entry['val_hm']:.4f}  "
                  f"gamma {entry['val_gamma']:.2f}  lr {entry['lr']:.2e}")
        else:
            print(f"stage 2 epoch {entry['epoch']:3d}  "
                  f"loss {entry['l_total']:.4f}  lr {entry['lr']:.2e}")

    report = trainer.run_protocol(config, out_dir=args.out,
                                  progress=None if args.quiet else progress)
    print(f"test: acc_seen {report.acc_seen:.4f}  "
          f"acc_unseen {report.acc_unseen:.4f}  HM {report.hm:.4f}  "
          f"acc_zsl {report.acc_zsl:.4f}  gamma {report.gamma:.2f}")
    print(f"report bundle written to {args.out}")
    return EXIT_OK


def _cmd_evaluate(args) -> int:
    archive = data.load_archive(args.archive)
    params = _load_checkpoint_for_archive(args.checkpoint, archive)
    report = trainer.evaluate_split(params, archive,
                                    _stage_for_split(args.split), args.gamma)
    print(f"{args.split}: acc_seen {report.acc_seen:.4f}  "
          f"acc_unseen {report.acc_unseen:.4f}  HM {report.hm:.4f}  "
          f"acc_zsl {report.acc_zsl:.4f}  gamma {report.gamma:.2f}")
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        report_mod.write_report_json(
            {"schema_version": 1, "split": args.split, **report.to_dict()},
            out / "report.json")
        report_mod.write_per_class_csv(report, out / "per_class_accuracy.csv")
        report_mod.plot_per_class(report, out / "per_class_accuracy.png")
        print(f"report written to {out}")
    return EXIT_OK


def _cmd_search_calibration(args) -> int:
    archive = data.load_archive(args.archive)
    params = _load_checkpoint_for_archive(args.checkpoint, archive)
    view = data.stage_view(archive, _stage_for_split(args.split))
    if view.eval_seen_indices.size == 0 or view.eval_unseen_indices.size == 0:
        raise ProtocolError(f"{args.split} split has no evaluation samples")
    eval_ids, eval_mask = trainer.eval_candidates(view)
    table = trainer.class_table(archive, eval_ids, params.switches)
    idx = np.concatenate([view.eval_seen_indices, view.eval_unseen_indices])
    v, a = trainer.gather_eval_features(archive, idx, params.switches)
    grid = evalkit.CalibrationGrid(step=args.step, limit=args.limit)
    result = evalkit.search_calibration(params, v, a, archive.labels[idx],
                                        table, eval_ids, eval_mask, grid)
    print(f"best gamma {result.gamma:.4f}  {args.split} HM {result.hm:.4f}  "
          f"({len(result.sweep)} grid points)")
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        report_mod.write_report_json(
            {"schema_version": 1, "split": args.split,
             "best_gamma": result.gamma, "best_hm": result.hm,
             "sweep": [{"gamma": g, "hm": h} for g, h in result.sweep]},
            out / "calibration.json")
        report_mod.write_sweep_csv(result.sweep, out / "calibration.csv")
        report_mod.plot_calibration_sweep(result.sweep, result.gamma,
                                          out / "calibration_sweep.png")
        print(f"sweep written to {out}")
    return EXIT_OK


def _cmd_export_embeddings(args) -> int:
    archive = data.load_archive(args.archive)
    params = _load_checkpoint_for_archive(args.checkpoint, archive)
    view = data.stage_view(archive, _stage_for_split(args.split))
    eval_ids, eval_mask = trainer.eval_candidates(view)
    table = trainer.class_table(archive, eval_ids, params.switches)
    idx = np.concatenate([view.eval_seen_indices, view.eval_unseen_indices])
    v, a = trainer.gather_eval_features(archive, idx, params.switches)
    theta_o = evalkit.embed_samples(params, v, a)
    theta_w = evalkit.embed_classes(params, table)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "theta_o.f32").write_bytes(
        np.ascontiguousarray(theta_o, dtype="<f4").tobytes())
    (out / "theta_w.f32").write_bytes(
        np.ascontiguousarray(theta_w, dtype="<f4").tobytes())
    (out / "labels.u32").write_bytes(
        np.ascontiguousarray(archive.labels[idx], dtype="<u4").tobytes())
    (out / "class_ids.u32").write_bytes(
        np.ascontiguousarray(eval_ids, dtype="<u4").tobytes())
    (out / "seen_mask.u8").write_bytes(
        np.ascontiguousarray(eval_mask, dtype="u1").tobytes())
    manifest = {
        "format_version": 1,
        "split": args.split,
        "num_samples": int(theta_o.shape[0]),
        "num_classes": int(theta_w.shape[0]),
        "d_out": int(theta_o.shape[1]),
        "class_names": [archive.class_names[int(c)] for c in eval_ids],
        "files": {
            "theta_o": "theta_o.f32", "theta_w": "theta_w.f32",
            "labels": "labels.u32", "class_ids": "class_ids.u32",
            "seen_mask": "seen_mask.u8",
        },
    }
    (out / "embeddings.json").write_text(
        json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
    print(f"exported {theta_o.shape[0]} sample embeddings and "
          f"{theta_w.shape[0]} class embeddings to {out}")
    return EXIT_OK


def _cmd_inspect(args) -> int:
    archive = data.load_archive(args.archive)
    split_counts = {s.name: int((archive.splits == int(s)).sum())
                    for s in Split}
    roles = [r.value for r in archive.class_roles]
    view1 = data.stage_view(archive, Stage.ONE)
    view2 = data.stage_view(archive, Stage.TWO)
    print(f"dataset: {archive.dataset}")
    print(f"dims: d_in_a={archive.d_in_a} d_in_v={archive.d_in_v}")
    print(f"classes: {archive.num_classes} "
          f"(TrainSeen={roles.count('TrainSeen')} "
          f"ValUnseen={roles.count('ValUnseen')} "
          f"TestUnseen={roles.count('TestUnseen')})")
    print(f"stage 1: K_s={view1.seen_classes.size} "
          f"K_u={view1.unseen_classes.size}; "
          f"stage 2: K_s={view2.seen_classes.size} "
          f"K_u={view2.unseen_classes.size}")
    print(f"samples: {archive.num_samples} ("
          + " ".join(f"{name}={count}" for name, count in
                     split_counts.items()) + ")")
    return EXIT_OK


_COMMANDS = {
    "synth": _cmd_synth,
    "train": _cmd_train,
    "evaluate": _cmd_evaluate,
    "search-calibration": _cmd_search_calibration,
    "export-embeddings": _cmd_export_embeddings,
    "inspect": _cmd_inspect,
}


def run_cli(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"error: {_suggest(str(exc), parser)}", file=sys.stderr)
        return EXIT_USAGE
    if args.command is None:
        parser.print_help()
        return EXIT_USAGE
    try:
        return _COMMANDS[args.command](args)
    except (UsageError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, DimensionError, ProtocolError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except EngineError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


def main() -> None:
    sys.exit(run_cli())


if __name__ == "__main__":
    main()
