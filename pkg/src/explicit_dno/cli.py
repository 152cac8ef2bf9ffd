"""Command-line front end: ``explicit-dno {apply,validate,converge,moving}``.

Outputs go to ``--out`` (default ``./out``):

* ``report.json``: deterministic record of inputs and results;
* ``timings.json``: wall-clock times (kept out of the report);
* ``*.fld``: fields in FLD1 format (``apply``, ``moving``);
* ``sweep.csv``: one row per sweep point (``converge``).

Failures print a single line ``error <CODE>: <message>`` on stderr and exit
with a nonzero status.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
from pathlib import Path

from .config import ENV_PREFIX, ConfigError, load_config
from .dno import BandError, DepthError
from .harness import COMMANDS, RunResult
from .krylov import SolverError
from .oracle import OracleError
from .spectral import GaugeError, GridMismatchError, write_fld1

EXIT_CODES = {
    "E_CONFIG": 2,
    "E_IO": 3,
    "E_GAUGE": 4,
    "E_DEPTH": 5,
    "E_SOLVER": 6,
    "E_ORACLE": 7,
    "E_FAILED": 8,
    "E_INTERNAL": 1,
}


def _classify(exc: BaseException) -> str:
    if isinstance(exc, GaugeError):
        return "E_GAUGE"
    if isinstance(exc, DepthError):
        return "E_DEPTH"
    if isinstance(exc, (ConfigError, GridMismatchError, BandError)):
        return "E_CONFIG"
    if isinstance(exc, SolverError):
        return "E_SOLVER"
    if isinstance(exc, OracleError):
        return "E_ORACLE"
    if isinstance(exc, OSError):
        return "E_IO"
    return "E_INTERNAL"


def _clean(obj):
    """Make a report JSON-safe; non-finite floats become null."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, float):
        return obj if math.isfinite(obj) else None
    if hasattr(obj, "item"):
        return _clean(obj.item())
    return obj


def _dump(path: Path, data) -> None:
    path.write_text(json.dumps(_clean(data), indent=2, sort_keys=True) + "\n")


def write_outputs(result: RunResult, out: Path, inputs: dict) -> None:
    out.mkdir(parents=True, exist_ok=True)
    _dump(out / "report.json", {"inputs": inputs, **result.report})
    _dump(out / "timings.json", result.timings)
    for name, f in result.fields.items():
        write_fld1(out / f"{name}.fld", f)
    if result.csv_rows is not None:
        with open(out / "sweep.csv", "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=["parameter", "error", "iterations", "time"], lineterminator="\n")
            w.writeheader()
            for row in result.csv_rows:
                w.writerow({k: row[k] for k in w.fieldnames})


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="explicit-dno",
        description="Explicit Dirichlet-Neumann operator: evaluation, validation and convergence studies.",
        epilog=f"Config keys may be overridden with {ENV_PREFIX}<SECTION>__<KEY>=<value>.",
    )
    sub = p.add_subparsers(dest="command", required=True)
    helps = {
        "apply": "evaluate G(phi_s) and compare with a reference",
        "validate": "run the invariant battery on a seeded ensemble",
        "converge": "sweep truncation, resolution, steepness or shallowness",
        "moving": "moving-bottom response and volume budget",
    }
    for name, text in helps.items():
        sp = sub.add_parser(name, help=text)
        sp.add_argument("--config", required=True, help="TOML configuration (schema = 1)")
        sp.add_argument("--out", default=None, help="output directory (default: [output].dir or ./out)")
        sp.add_argument("--seed", type=int, default=None, help="seed for random generators (u64)")
        sp.add_argument("--workers", type=int, default=None, help="concurrent sweep points")
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = load_config(args.config)
        seed = args.seed if args.seed is not None else int(os.environ.get(ENV_PREFIX + "SEED", cfg.raw.get("seed", 0)))
        if not 0 <= seed < 2**64:
            raise ConfigError("seed must be an unsigned 64-bit integer")
        workers = args.workers if args.workers is not None else int(os.environ.get(ENV_PREFIX + "WORKERS", 1))
        if workers < 1:
            raise ConfigError("--workers must be >= 1")
        out = Path(args.out or cfg.section("output").get("dir", "out"))
        cmd = COMMANDS[args.command]
        kwargs = {"seed": seed}
        if args.command in ("validate", "converge"):
            kwargs["workers"] = workers
        result = cmd(cfg, **kwargs)
        write_outputs(result, out, {k: v for k, v in cfg.raw.items()})
    except Exception as exc:  # noqa: BLE001 - every failure becomes one line
        code = _classify(exc)
        msg = " ".join(str(exc).split())
        print(f"error {code}: {msg}", file=sys.stderr)
        return EXIT_CODES[code]
    status = "passed" if result.passed else "FAILED"
    print(f"{args.command}: {status} (report in {out / 'report.json'})")
    if not result.passed:
        print(f"error E_FAILED: one or more properties failed (see {out / 'report.json'})", file=sys.stderr)
        return EXIT_CODES["E_FAILED"]
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
