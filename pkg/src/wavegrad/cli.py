"""``wavegrad`` command line.

Exit status: 0 when the run meets its criteria, 1 when it does not, 2 for
usage or configuration errors.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys

from . import experiments as ex
from .lagrangian import DivergenceError, InconsistentInitialState, NotFeedforwardError

log = logging.getLogger("wavegrad")

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="wavegrad", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name, help_ in [
        ("wave-run", "run the wave engine against the backprop oracle"),
        ("sweep", "gradient error across sinusoid periods"),
        ("lagrangian-run", "integrate the constrained Euler-Lagrange dynamics"),
        ("bp-limit-check", "compare the massless limit with backprop"),
    ]:
        sp = sub.add_parser(name, help=help_)
        sp.add_argument("--config", required=True)
    rp = sub.add_parser("render", help="draw a JSON frame dump as text")
    rp.add_argument("--trace", required=True)
    rp.add_argument("--grid", action="store_true", help="one layer-by-tick grid instead of frames")
    return p


def _print(report: dict) -> None:
    print(json.dumps(report, indent=1, sort_keys=True))


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "render":
            doc = ex.load_frames(args.trace)
            if args.grid:
                print(ex.render_grid(doc))
            else:
                print("\n\n".join(ex.render_frames(doc)))
            return EXIT_OK
        config = ex.load_config(args.config)
        if args.command == "wave-run":
            rep, _ = ex.run_wave_experiment(config)
            report = rep.to_dict()
        elif args.command == "sweep":
            report = ex.run_frequency_sweep(config).to_dict()
        elif args.command == "lagrangian-run":
            report = ex.run_lagrangian(config)
        else:
            report = ex.run_bp_limit_check(config)
    except (ex.ConfigError, ex.TraceParseError, NotFeedforwardError, InconsistentInitialState) as exc:
        print(f"wavegrad: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DivergenceError as exc:
        print(f"wavegrad: {exc}", file=sys.stderr)
        return EXIT_FAIL
    _print(report)
    return EXIT_OK if report["passed"] else EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
