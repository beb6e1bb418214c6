"""Command-line entry point."""
from __future__ import annotations

import argparse
import os
import sys

from ..errors import DegenerateUpdateError, InvalidArgument, StabilityError
from .config import load_config
from .emit import EmitError, _write, emit
from .run import build_stimulus, run, speed_discrimination
from .validate import validate


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="coherent-motion",
                                description="Probabilistic motion estimation on a hex lattice")
    sub = p.add_subparsers(dest="command", required=True)
    for name, help_ in (("run", "run one experiment and write metrics"),
                        ("discriminate", "speed discrimination thresholds"),
                        ("validate", "engine self-checks on a small configuration"),
                        ("emit-stimulus", "write the stimulus described by a config file")):
        sp = sub.add_parser(name, help=help_)
        sp.add_argument("config", help="key = value configuration file")
        sp.add_argument("--seed", type=int, default=None)
        sp.add_argument("--engine", choices=("kernel", "pde"), default=None)
        sp.add_argument("--out", default=None, help="output directory")
    return p


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        cfg = load_config(args.config).with_overrides(seed=args.seed, engine=args.engine,
                                                      out=args.out)
        cfg.validate()
        if args.command == "run":
            rec = run(cfg)
            for path in emit(rec, cfg.out, cfg.width, cfg.height):
                print(path)
        elif args.command == "discriminate":
            res = speed_discrimination(cfg)
            os.makedirs(cfg.out, exist_ok=True)
            lines = ["n_jumps," + ",".join(repr(float(d)) for d in res.dv_grid)]
            for n, row in zip(res.n_jumps_list, res.percent_correct):
                lines.append(f"{n}," + ",".join(repr(float(v)) for v in row))
            _write(os.path.join(cfg.out, "percent_correct.csv"), "\n".join(lines) + "\n")
            _write(os.path.join(cfg.out, "thresholds.csv"), res.table())
            sys.stdout.write(res.table())
        elif args.command == "validate":
            rep = validate(cfg)
            sys.stdout.write(rep.text())
            if not rep.passed:
                return 1
        else:
            text = build_stimulus(cfg).dumps()
            if args.out is None:
                sys.stdout.write(text)
            else:
                os.makedirs(cfg.out, exist_ok=True)
                path = os.path.join(cfg.out, "stimulus.txt")
                _write(path, text)
                print(path)
    except (InvalidArgument, StabilityError, DegenerateUpdateError, EmitError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
