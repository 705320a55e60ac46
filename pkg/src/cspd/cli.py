"""Command-line entry point: ``cspd run|smoke|dump-channel``."""

import argparse
import json
import logging
import sys
import time
from dataclasses import replace
from pathlib import Path

from .channel import dump_channel, generate_channel
from .errors import CspdError
from .harness import ExperimentSpec, parse_config, run, smoke_spec

log = logging.getLogger("cspd")


def _common(p):
    p.add_argument("--seed", type=int, default=None, help="first seed (overrides the config)")
    p.add_argument("--out-dir", type=Path, default=Path("out"), help="output directory")
    p.add_argument("--threads", type=int, default=1, help="worker threads for (SNR, seed) points")


def build_parser():
    parser = argparse.ArgumentParser(prog="cspd", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run the experiment described by a JSON config")
    p_run.add_argument("config", type=Path)
    _common(p_run)

    p_smoke = sub.add_parser("smoke", help="tiny end-to-end run (M=4, K=2, N_v=8)")
    _common(p_smoke)

    p_dump = sub.add_parser("dump-channel", help="write the seeded channel taps to disk")
    p_dump.add_argument("config", type=Path, nargs="?", default=None)
    p_dump.add_argument("--format", choices=("json", "bin"), default="json")
    _common(p_dump)
    return parser


def _with_seed(spec: ExperimentSpec, seed):
    return spec if seed is None else replace(spec, seed=seed)


def _execute(spec, args):
    t0 = time.perf_counter()
    report = run(spec, threads=max(1, args.threads), out_dir=args.out_dir)
    failed = sum(r.status != "ok" for r in report.rows)
    log.info("%d rows (%d failed) in %.1f s -> %s", len(report.rows), failed,
             time.perf_counter() - t0, args.out_dir)
    print(json.dumps({"rows": len(report.rows), "failed": failed, "out_dir": str(args.out_dir)}))
    return 0


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "run":
            return _execute(_with_seed(parse_config(args.config), args.seed), args)
        if args.command == "smoke":
            return _execute(smoke_spec(0 if args.seed is None else args.seed), args)
        spec = parse_config(args.config) if args.config else ExperimentSpec()
        seed = spec.seed if args.seed is None else args.seed
        ch = generate_channel(spec.cfg.replace(seed=seed))
        args.out_dir.mkdir(parents=True, exist_ok=True)
        path = dump_channel(ch, args.out_dir / f"channel_{seed}.{args.format}")
        print(path)
        return 0
    except (CspdError, OSError) as exc:
        print(f"cspd: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
