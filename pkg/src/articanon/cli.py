"""Command line: generate, oracle-segment, train, predict, evaluate."""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import __version__
from . import dataset as ds
from .clustering import DEFAULT_MIN_PTS, segment_instances
from .io import FormatError, read_checkpoint, write_checkpoint, write_json
from .kinematics import CANONICAL, TARGET_MODES, gt_offsets
from .metrics import Evaluator, MetricReport
from .model import Prepared, TrainConfig, TrainingDiverged, loss_curve_csv, predict, train
from .scenegen import STUFF_CLASSES
from .sensing import DEFAULT_POINTS, DEFAULT_RESOLUTION, DEFAULT_VIEWS

log = logging.getLogger("articanon")


def _refs(args, manifest, split):
    return ds.sample_refs(manifest, split, args.frames, args.spacing, args.state_ids)


def _emit_report(report: MetricReport, out: Path | None, quiet=False):
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.json").write_text(report.to_json() + "\n")
        (out / "report.txt").write_text(report.to_table() + "\n")
    if not quiet:
        print(report.to_table())


def _run_oracle(root, manifest, refs, mode, eps, min_pts):
    return [ds.oracle_segment(root, r, mode, eps, min_pts) for r in refs]


def _run_model(root, refs, params, eps, min_pts):
    results = []
    for r in refs:
        rec = ds.load_object(root, {"name": r.name, "kind": r.kind})
        sample = ds.load_sample(root, r.name, r.states)
        sem, off = predict(params, sample)
        results.append(segment_instances(sample, off, sem, ds.clustering_eps(rec, eps), min_pts, STUFF_CLASSES))
    return results


def _score(root, refs, results, strict) -> MetricReport:
    ev = Evaluator(strict=strict, stuff_classes=STUFF_CLASSES)
    for r, res in zip(refs, results):
        ev.add(ds.ground_truth(ds.load_sample(root, r.name, r.states)), res, group=r.kind)
    return ev.report()


def cmd_generate(args) -> int:
    man = ds.generate_dataset(args.out, args.subset, args.seed, args.states, args.views, args.points,
                              args.resolution, args.n_train, args.n_test, args.frames, args.spacing,
                              progress=lambda n: log.info("generated %s", n))
    print(f"wrote {len(man['objects'])} objects x {args.states} states to {args.out}")
    return 0


def cmd_oracle_segment(args) -> int:
    manifest = ds.load_manifest(args.data)
    refs = _refs(args, manifest, args.split)
    results = _run_oracle(args.data, manifest, refs, args.target_mode, args.eps, args.min_pts)
    out = Path(args.out)
    ds.write_predictions(out, refs, results, {
        "source": "oracle", "target_mode": args.target_mode, "frames": len(refs[0].states),
        "spacing": args.spacing or manifest["spacing"], "eps": args.eps, "min_pts": args.min_pts,
        "version": __version__})
    _emit_report(_score(args.data, refs, results, args.strict_classes), out)
    return 0


def _training_set(root, refs, target_mode, name_prefix=""):
    prepared = []
    for r in refs:
        rec = ds.load_object(root, {"name": r.name, "kind": r.kind})
        sample = ds.load_sample(root, r.name, r.states)
        fld = gt_offsets(sample, rec.model, [rec.states[s] for s in r.states], target_mode=target_mode,
                         stuff_classes=STUFF_CLASSES)
        prepared.append(Prepared.from_sample(sample, fld, name_prefix + r.key))
    return prepared


def cmd_train(args) -> int:
    manifest = ds.load_manifest(args.data)
    refs = _refs(args, manifest, args.split)
    if not refs:
        raise SystemExit(f"no training samples in split {args.split!r}")
    config = TrainConfig(lr=args.lr, epochs=args.epochs, batch_size=args.batch_size, seed=args.seed,
                         loss=args.loss, warmup=args.warmup, patience=args.patience)
    samples = _training_set(args.data, refs, args.target_mode)

    def progress(row):
        if row["epoch"] % 10 == 0 or row["epoch"] == 1:
            log.info("epoch %(epoch)d l_sem %(l_sem).4f l_canon %(l_canon).4f lr %(lr).2e", row)

    params, history = train(samples, config, progress=progress)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    meta = {"config": config.to_dict(), "target_mode": args.target_mode,
            "samples": [r.key for r in refs], "version": __version__}
    write_checkpoint(out / "checkpoint.a4dm", params, meta)
    (out / "loss.csv").write_text(loss_curve_csv(history))
    last = history[-1]
    print(f"trained {len(history)} epochs: l_sem {last['l_sem']:.4f} l_canon {last['l_canon']:.4f}")
    return 0


def cmd_predict(args) -> int:
    manifest = ds.load_manifest(args.data)
    params, meta = read_checkpoint(args.checkpoint)
    refs = _refs(args, manifest, args.split)
    results = _run_model(args.data, refs, params, args.eps, args.min_pts)
    ds.write_predictions(args.out, refs, results, {
        "source": "model", "checkpoint": Path(args.checkpoint).name, "frames": len(refs[0].states),
        "spacing": args.spacing or manifest["spacing"], "eps": args.eps, "min_pts": args.min_pts,
        "version": __version__})
    print(f"wrote {len(refs)} prediction files to {args.out}")
    return 0


def cmd_evaluate(args) -> int:
    out = Path(args.out) if args.out else None
    sweep = args.frames if isinstance(args.frames, list) else [args.frames]
    if args.pred:
        if len(args.pred) == 1 and args.csv is None:
            ev = ds.evaluate_predictions(args.data, args.pred[0], args.strict_classes)
            _emit_report(ev.report(), out)
            return 0
        rows = []
        for p in args.pred:
            meta, _ = ds.read_predictions(p)
            rep = ds.evaluate_predictions(args.data, p, args.strict_classes).report()
            rows.append((meta.get("frames"), meta.get("spacing"), rep))
    else:
        if args.checkpoint is None and args.oracle is None:
            raise SystemExit("evaluate needs --pred, --checkpoint or --oracle")
        manifest = ds.load_manifest(args.data)
        params = read_checkpoint(args.checkpoint)[0] if args.checkpoint else None
        rows = []
        for f in sweep:
            a = argparse.Namespace(**{**vars(args), "frames": f})
            refs = _refs(a, manifest, args.split)
            if params is not None:
                results = _run_model(args.data, refs, params, args.eps, args.min_pts)
            else:
                results = _run_oracle(args.data, manifest, refs, args.oracle, args.eps, args.min_pts)
            rows.append((f, args.spacing or manifest["spacing"], _score(args.data, refs, results,
                                                                        args.strict_classes)))
    lines = ["frames,spacing,s_cls,s_assoc,lstq"]
    lines += [f"{f},{sp},{r.s_cls:.6f},{r.s_assoc:.6f},{r.lstq:.6f}" for f, sp, r in rows]
    text = "\n".join(lines) + "\n"
    if args.csv:
        Path(args.csv).write_text(text)
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        write_json(out / "sweep.json", [{"frames": f, "spacing": sp, **r.to_dict()} for f, sp, r in rows])
    print(text, end="")
    return 0


def _state_ids(text):
    return [int(v) for v in text.split(",") if v.strip()]


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="articanon", description=__doc__)
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, frames_multi=False):
        sp.add_argument("--seed", type=int, default=42)
        sp.add_argument("--out")
        if frames_multi:
            sp.add_argument("--frames", type=int, nargs="+", default=None)
        else:
            sp.add_argument("--frames", type=int, default=None)
        sp.add_argument("--spacing", choices=[ds.MAX, ds.ADJACENT], default=None)

    def seg(sp):
        sp.add_argument("--data", required=True)
        sp.add_argument("--eps", type=float, default=None, help="default 0.05 x object bounding radius")
        sp.add_argument("--min-pts", type=int, default=DEFAULT_MIN_PTS)
        sp.add_argument("--state-ids", type=_state_ids, default=None,
                        help="explicit comma-separated state indices for one sample per object")
        sp.add_argument("--strict-classes", action="store_true")

    g = sub.add_parser("generate", help="render a synthetic dataset")
    common(g)
    g.add_argument("--subset", choices=["S", "D", "M"], default="M")
    g.add_argument("--states", type=int, default=100)
    g.add_argument("--views", type=int, default=DEFAULT_VIEWS)
    g.add_argument("--points", type=int, default=DEFAULT_POINTS)
    g.add_argument("--resolution", type=int, default=DEFAULT_RESOLUTION)
    g.add_argument("--n-train", type=int, default=ds.DEFAULT_TRAIN)
    g.add_argument("--n-test", type=int, default=ds.DEFAULT_TEST)
    g.set_defaults(func=cmd_generate)

    o = sub.add_parser("oracle-segment", help="cluster with ground-truth offsets and semantics")
    common(o)
    seg(o)
    o.add_argument("--target-mode", choices=TARGET_MODES, default=CANONICAL)
    o.add_argument("--split", choices=["all", "train", "test"], default="all")
    o.set_defaults(func=cmd_oracle_segment)

    t = sub.add_parser("train", help="train the per-point model")
    common(t)
    seg(t)
    t.add_argument("--target-mode", choices=TARGET_MODES, default=CANONICAL)
    t.add_argument("--loss", choices=["lovasz", "ce"], default="lovasz")
    t.add_argument("--epochs", type=int, default=200)
    t.add_argument("--lr", type=float, default=1e-3)
    t.add_argument("--batch-size", type=int, default=1)
    t.add_argument("--warmup", type=int, default=10)
    t.add_argument("--patience", type=int, default=10)
    t.add_argument("--split", choices=["all", "train", "test"], default="train")
    t.set_defaults(func=cmd_train)

    pr = sub.add_parser("predict", help="run a checkpoint and cluster its offsets")
    common(pr)
    seg(pr)
    pr.add_argument("--checkpoint", required=True)
    pr.add_argument("--split", choices=["all", "train", "test"], default="test")
    pr.set_defaults(func=cmd_predict)

    e = sub.add_parser("evaluate", help="score predictions against ground truth")
    common(e, frames_multi=True)
    seg(e)
    e.add_argument("--pred", nargs="+", help="prediction directories")
    e.add_argument("--checkpoint", help="sweep mode: predict with this checkpoint per --frames value")
    e.add_argument("--oracle", choices=TARGET_MODES, help="sweep mode: oracle offsets in this mode")
    e.add_argument("--csv", help="write one row per setting to this CSV")
    e.add_argument("--split", choices=["all", "train", "test"], default="all")
    e.set_defaults(func=cmd_evaluate)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    for name in ("train", "predict", "oracle-segment"):
        if args.command == name and not args.out:
            parser.error(f"{name} requires --out")
    if args.command == "generate":
        if not args.out:
            parser.error("generate requires --out")
        args.frames = 3 if args.frames is None else args.frames
        args.spacing = args.spacing or ds.MAX
    if args.command == "evaluate" and args.frames is None:
        args.frames = [None]
    try:
        return args.func(args)
    except (FormatError, FileNotFoundError, ValueError, TrainingDiverged, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
