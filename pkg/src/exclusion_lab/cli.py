"""Command line: ``exclusion-lab run <config>`` and ``exclusion-lab validate <config>``."""

import argparse
import sys

from .harness import EXIT_CONFIG, run_file, validate_text


def _parser():
    p = argparse.ArgumentParser(prog="exclusion-lab", description="Exclusion process experiments.")
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run the experiment described by a config file")
    r.add_argument("config")
    r.add_argument("--workers", type=int, default=1, help="worker processes (default 1)")
    r.add_argument("--out", default=".", help="output directory (default .)")
    v = sub.add_parser("validate", help="check a config file without running it")
    v.add_argument("config")
    return p


def main(argv=None):
    args = _parser().parse_args(argv)
    try:
        with open(args.config) as fh:
            text = fh.read()
    except OSError as e:
        print(f"error: cannot read {args.config}: {e.strerror}", file=sys.stderr)
        return EXIT_CONFIG
    if args.command == "validate":
        ok, msg = validate_text(text)
        (sys.stdout if ok else sys.stderr).write(msg)
        return 0 if ok else EXIT_CONFIG
    if args.workers < 1:
        print("error: --workers must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    code, m = run_file(args.config, args.out, args.workers)
    if code == EXIT_CONFIG:
        sys.stderr.write("".join(f"error: {p}\n" for p in m.get("errors", [])))
    else:
        for name, ok in m["criteria"].items():
            print(f"{name}: {'pass' if ok else ('fail' if ok is False else 'inconclusive')}")
        print(f"audit violations: {m['audit']['violations']}")
        print(f"status: {m['status']}")
    return code


if __name__ == "__main__":
    sys.exit(main())
