"""Command-line entry point: ``eeba run|validate|complexity|dump-channel|inspect-channel``.

Failures exit nonzero and print a JSON object ``{"error", "field", "message"}``
on stderr.
"""

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .channel import ChannelRealization, generate_channel, numerical_rank
from .exceptions import ConfigError, EebaError
from .experiment import SOLVER_NAMES, ExperimentConfig, complexity_report, run_experiment, validate


def _solver_list(text):
    names = [s.strip() for s in text.split(",") if s.strip()]
    bad = [s for s in names if s not in SOLVER_NAMES]
    if bad or not names:
        raise ConfigError("solvers", f"unknown solver(s) {bad}; choose from {', '.join(SOLVER_NAMES)}")
    return names


def _load(path):
    return ExperimentConfig.from_file(path) if path else ExperimentConfig()


def cmd_run(args):
    cfg = _load(args.config)
    solvers = _solver_list(args.solvers) if args.solvers else None
    if args.threads < 1:
        raise ConfigError("threads", "must be >= 1")
    outdir = run_experiment(cfg, out=args.out, seed=args.seed, solvers=solvers, threads=args.threads)
    print(json.dumps({"status": "ok", "output_dir": str(outdir)}))


def cmd_validate(args):
    path, rows = validate(_load(args.config), out=args.out)
    failed = [r for r in rows if not r["passed"]]
    print(json.dumps({"status": "ok" if not failed else "failed", "file": str(path),
                      "checks": len(rows), "failed": len(failed)}))
    return 0 if not failed else 1


def cmd_complexity(args):
    path, rows = complexity_report(_load(args.config), out=args.out)
    print(json.dumps({"status": "ok", "file": str(path), "rows": len(rows)}))


def cmd_dump_channel(args):
    cfg = _load(args.config)
    ns = args.n_streams if args.n_streams is not None else cfg.n_streams[0]
    chan = generate_channel(cfg.array, cfg.scenario_for(args.scenario), args.seed, n_streams=ns)
    text = chan.to_json()
    if args.out:
        Path(args.out).write_text(text + "\n")
    else:
        print(text)


def cmd_inspect_channel(args):
    try:
        text = Path(args.file).read_text()
    except OSError as exc:
        raise ConfigError("file", f"cannot read {args.file}: {exc.strerror}") from None
    try:
        chan = ChannelRealization.from_json(text)
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, EebaError):
            raise
        raise ConfigError("file", f"malformed channel file: {exc}") from None
    info = {"dims": list(chan.H.shape), "n_streams": chan.n_streams, "seed": chan.seed,
            "rank": numerical_rank(chan.H), "frobenius_norm_sq": float(np.linalg.norm(chan.H) ** 2),
            "singular_values": chan.singular_values.tolist(), "meta": chan.meta}
    print(json.dumps(info, indent=2))


def build_parser():
    parser = argparse.ArgumentParser(prog="eeba", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run the SNR sweep and write CSV outputs")
    p.add_argument("--config", required=True)
    p.add_argument("--out")
    p.add_argument("--seed", type=int)
    p.add_argument("--solvers", help="comma-separated subset of " + ",".join(SOLVER_NAMES))
    p.add_argument("--threads", type=int, default=1)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("validate", help="Monte-Carlo and series-remainder checks")
    p.add_argument("--config", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("complexity", help="operation-count report")
    p.add_argument("--config", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_complexity)

    p = sub.add_parser("dump-channel", help="write one channel realization as JSON")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--config")
    p.add_argument("--scenario", type=int, choices=(1, 2), default=2)
    p.add_argument("--n-streams", type=int)
    p.add_argument("--out")
    p.set_defaults(func=cmd_dump_channel)

    p = sub.add_parser("inspect-channel", help="summarize a channel JSON file")
    p.add_argument("file")
    p.set_defaults(func=cmd_inspect_channel)
    return parser


def _fail(kind, field, message):
    print(json.dumps({"error": kind, "field": field, "message": message}), file=sys.stderr)
    return 2


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        status = args.func(args)
    except ConfigError as exc:
        return _fail("ConfigError", exc.field, str(exc))
    except EebaError as exc:
        return _fail(type(exc).__name__, None, str(exc))
    return status or 0


if __name__ == "__main__":
    raise SystemExit(main())
