"""``pfedwn`` command line entry point.

Exit codes: 0 ok, 2 configuration error, 3 numerical error (including a
failed oracle suite), 4 I/O error. Failures print one JSON object on stderr.
"""

import argparse
import json
import sys

from .config import MODES, parse_config
from .exceptions import (ConfigError, DegenerateInterferenceError, FitError, FormatError,
                         NumericalError, ParameterError, PfedwnError)
from .runner import run

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_IO = 0, 2, 3, 4


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="JSON configuration file")
    common.add_argument("--seed", type=int, help="master seed (overrides the config)")
    common.add_argument("--out", metavar="DIR", help="output directory (overrides the config)")
    common.add_argument("--override", action="append", default=[], metavar="KEY=VALUE",
                        help="dot-path override, value parsed as JSON, e.g. train.alpha=0.7")
    parser = argparse.ArgumentParser(prog="pfedwn", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="mode", required=True)
    for mode in MODES:
        sub.add_parser(mode, parents=[common])
    return parser


def _fail(code, exc):
    doc = {"error": type(exc).__name__, "module": getattr(exc, "module", "pfedwn"), "message": str(exc)}
    if isinstance(exc, ConfigError):
        doc["pointer"] = exc.pointer
    if isinstance(exc, NumericalError) and exc.diagnostics:
        doc["diagnostics"] = {k: repr(v) for k, v in exc.diagnostics.items()}
    print(json.dumps(doc, sort_keys=True), file=sys.stderr)
    return code


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        config = parse_config(args.config, overrides=[*args.override, f"mode={args.mode}"],
                              seed=args.seed, output_dir=args.out)
    except FileNotFoundError as exc:
        return _fail(EXIT_IO, exc)
    except ConfigError as exc:
        return _fail(EXIT_CONFIG, exc)
    try:
        summary, results = run(config)
    except (FormatError, OSError) as exc:
        return _fail(EXIT_IO, exc)
    except (NumericalError, FitError, DegenerateInterferenceError) as exc:
        return _fail(EXIT_NUMERICAL, exc)
    except (ParameterError, PfedwnError) as exc:
        return _fail(EXIT_CONFIG, exc)
    if results is not None and not all(r.passed for r in results):
        failed = [r.name for r in results if not r.passed]
        return _fail(EXIT_NUMERICAL, NumericalError(f"oracle suites failed: {', '.join(failed)}"))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
