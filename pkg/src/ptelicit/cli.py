"""Command-line entry point: ``ptelicit <verb> [flags]``.

Verbs: stage1, stage2, round, fit, report, simulate. Errors are printed to
stderr as a single JSON object and the exit code is nonzero.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import pipeline
from .errors import PTElicitError


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        sys.stderr.write(json.dumps({"error": "UsageError", "message": message}) + "\n")
        sys.exit(2)


def _run_flags(p):
    p.add_argument("--config", required=True, help="YAML run configuration")
    p.add_argument("--seed", type=int, help="master seed")
    p.add_argument("--samples", type=int, help="samples per lottery / grid point")
    p.add_argument("--replicates", type=int, help="bootstrap replicates")
    p.add_argument("--out", type=Path, help="run output directory")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="ptelicit", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="verb", required=True, parser_class=_Parser)

    _run_flags(sub.add_parser("stage1", help="baseline battery, fit and bootstrap"))
    _run_flags(sub.add_parser("stage2", help="marker probability sweep"))
    p = sub.add_parser("round", help="marker-substituted round (1-4)")
    _run_flags(p)
    p.add_argument("--round", required=True, help="1, 2, 3, 4 or round1..round4")
    p.add_argument("--marker-map", type=Path, help="defaults to <out>/stage2/marker_map.json")

    p = sub.add_parser("fit", help="re-estimate from a persisted counts CSV")
    p.add_argument("counts", type=Path)
    p.add_argument("--probs", type=Path, help="probabilities.json sidecar")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--replicates", type=int, default=1000)
    p.add_argument("--out", type=Path, help="write the report JSON here instead of stdout")

    p = sub.add_parser("report", help="summarise a run directory")
    p.add_argument("run_dir", type=Path)

    p = sub.add_parser("simulate", help="full pipeline with synthetic agents")
    p.add_argument("--sigma", type=float, default=0.670)
    p.add_argument("--lam", type=float, default=2.630)
    p.add_argument("--gamma", type=float, default=0.685)
    p.add_argument("--sharpness", type=float, default=1.0,
                   help="marker agent logistic slope per percentage point")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--samples", type=int, default=256)
    p.add_argument("--replicates", type=int, default=1000)
    p.add_argument("--stages", nargs="+", default=list(pipeline.ALL_STAGES))
    p.add_argument("--no-transcripts", action="store_true")
    p.add_argument("--out", type=Path, required=True)
    return ap


def _config(args) -> pipeline.RunConfig:
    return pipeline.load_config(args.config, master_seed=args.seed, n_samples=args.samples,
                                bootstrap_replicates=args.replicates, output_dir=args.out)


def _print_report(rep):
    print(json.dumps(rep.to_dict(), indent=2))


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.verb == "stage1":
            _print_report(pipeline.cmd_stage1(_config(args)))
        elif args.verb == "stage2":
            res = pipeline.cmd_stage2(_config(args))
            print(json.dumps({t: r.to_dict() for t, r in res.items()}, indent=2))
        elif args.verb == "round":
            _print_report(pipeline.cmd_round(_config(args), args.round, args.marker_map))
        elif args.verb == "fit":
            rep = pipeline.cmd_fit(args.counts, args.probs, args.replicates, args.seed)
            if args.out:
                args.out.write_text(json.dumps(rep.to_dict(), indent=2) + "\n")
            else:
                _print_report(rep)
        elif args.verb == "report":
            print(pipeline.cmd_report(args.run_dir), end="")
        elif args.verb == "simulate":
            cfg = pipeline.simulation_config(
                args.sigma, args.lam, args.gamma, output_dir=args.out, n_samples=args.samples,
                bootstrap_replicates=args.replicates, master_seed=args.seed,
                sharpness=args.sharpness, stages=args.stages,
                transcripts=not args.no_transcripts,
            )
            pipeline.run_all(cfg)
            print(pipeline.cmd_report(args.out), end="")
    except (PTElicitError, OSError) as e:
        err = {"error": type(e).__name__, "message": str(e)}
        for attr in ("row", "lottery_id", "failures"):
            if getattr(e, attr, None) is not None:
                err[attr] = getattr(e, attr)
        sys.stderr.write(json.dumps(err) + "\n")
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
