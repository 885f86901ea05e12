"""Command line entry point: ``gt-bench`` / ``python -m gtbench``.

Exit codes: 0 success, 1 usage or configuration error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import analysis, harness, measures, mlp, synthdata

log = logging.getLogger("gtbench")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _widths(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(w) for w in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated widths, got {text!r}") from None


def _load_or_make(args) -> synthdata.Dataset:
    if args.dataset:
        return synthdata.load_dataset(args.dataset)
    if not args.archetype:
        raise UsageError("give --dataset or --archetype")
    return synthdata.generate(synthdata.make_spec(args.archetype, args.seed, args.n_obs))


def _add_dataset_args(p, required=False):
    p.add_argument("--dataset", help="dataset path stem written by `gen` (.npz + .json)")
    p.add_argument("--archetype", choices=list(synthdata.ARCHETYPES))
    p.add_argument("--seed", type=int, default=0, help="dataset seed")
    p.add_argument("--n-obs", type=int, default=100_000)


def cmd_gen(args):
    spec = synthdata.make_spec(args.archetype, args.seed, args.n_obs)
    data = synthdata.generate(spec)
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    npz, sidecar = synthdata.save_dataset(data, args.out)
    written = [str(npz), str(sidecar)]
    if args.csv:
        synthdata.to_csv(data, Path(args.out).with_suffix(".csv"))
        written.append(str(Path(args.out).with_suffix(".csv")))
    print(json.dumps({"written": written}))


def cmd_train(args):
    data = _load_or_make(args)
    fit_rows, eval_rows = measures.holdout_split(data.n_obs, data.spec.seed)
    shape = mlp.NetworkShape.of(*args.layers)
    cfg = mlp.TrainConfig(seed=args.train_seed if args.train_seed is not None else args.net_seed)
    net = mlp.init_network(shape, data.m, args.net_seed, cfg.init_std)
    net, rep = mlp.train(net, (data.inputs[fit_rows], data.outputs[fit_rows]), cfg)
    log.info("trained %s: %s", shape, rep)
    part = measures.partition(data, args.n_bins, args.min_occupancy)
    result = measures.evaluate(net, data, data.spec, eval_rows=eval_rows, part=part, diverged=rep.diverged,
                               complexity=mlp.complexity(net))
    if args.save_model:
        mlp.save_network(net, args.save_model)
    print(json.dumps(result.to_dict()))


def cmd_sweep(args):
    try:
        cfg = harness.ExperimentConfig.from_json(args.config)
    except (OSError, ValueError, TypeError) as exc:
        raise UsageError(f"bad config {args.config}: {exc}") from exc
    if args.workers:
        cfg.worker_count = args.workers
    if args.output:
        cfg.output_directory = args.output
    table = harness.run_sweep(cfg)
    print(json.dumps({"rows": len(table), "diverged": sum(r.diverged for r in table),
                      "table": str(Path(cfg.output_directory) / harness.JOURNAL)}))


def cmd_report(args):
    summary = harness.report(args.table, args.out, args.min_rows)
    print((Path(args.out) / "summary.txt").read_text(), end="")
    return summary


def cmd_curves(args):
    data = _load_or_make(args)
    net = mlp.load_network(args.model)
    part = measures.partition(data, args.n_bins, args.min_occupancy)
    proxy = measures.proxy_curves(data, part)
    learnt = measures.probe(net, part, data.input_medians())
    measures.export_curves(args.out, part, proxy, learnt)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="gt-bench", description="Mean Fit to Median benchmark on synthetic ground-truth data")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("gen", help="generate a dataset and its spec sidecar")
    g.add_argument("--archetype", required=True, choices=list(synthdata.ARCHETYPES))
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--n-obs", type=int, default=100_000)
    g.add_argument("--out", required=True, help="output path stem")
    g.add_argument("--csv", action="store_true", help="also write <out>.csv")
    g.set_defaults(func=cmd_gen)

    t = sub.add_parser("train", help="train one network and print its measures as JSON")
    _add_dataset_args(t)
    t.add_argument("--layers", type=_widths, default=(32, 32), help="hidden widths, e.g. 64,32")
    t.add_argument("--net-seed", type=int, default=0)
    t.add_argument("--train-seed", type=int)
    t.add_argument("--n-bins", type=int, default=measures.DEFAULT_BINS)
    t.add_argument("--min-occupancy", type=int, default=measures.DEFAULT_MIN_OCCUPANCY)
    t.add_argument("--save-model", help="write the trained network as JSON")
    t.set_defaults(func=cmd_train)

    s = sub.add_parser("sweep", help="run or resume a sweep from a JSON config")
    s.add_argument("--config", required=True)
    s.add_argument("--workers", type=int)
    s.add_argument("--output", help="override output_directory")
    s.set_defaults(func=cmd_sweep)

    r = sub.add_parser("report", help="emit heatmaps, scatter data and a summary for a sweep")
    r.add_argument("--table", required=True, help="sweep directory or runs.csv")
    r.add_argument("--out", required=True)
    r.add_argument("--min-rows", type=int, default=30, help="usable runs required per dataset")
    r.set_defaults(func=cmd_report)

    c = sub.add_parser("curves", help="export proxy and learnt curves for a trained model")
    _add_dataset_args(c)
    c.add_argument("--model", required=True)
    c.add_argument("--n-bins", type=int, default=measures.DEFAULT_BINS)
    c.add_argument("--min-occupancy", type=int, default=measures.DEFAULT_MIN_OCCUPANCY)
    c.add_argument("--out", required=True)
    c.set_defaults(func=cmd_curves)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except UsageError as exc:
        print(f"gt-bench: error: {exc}", file=sys.stderr)
        return 1
    except (analysis.TableParseError, harness.ReportError) as exc:
        print(f"gt-bench: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"gt-bench: error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001
        print(f"gt-bench: runtime failure: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
