"""Command line entry point: ``elasticsched <experiment> [options]``.

Exit status is 0 on success, 1 when an experiment's checks fail and 2 on
invalid input.
"""
from __future__ import annotations

import argparse
import sys
import typing
from dataclasses import fields

from .domain import InvalidParams
from .experiments import RUNNERS, ExperimentSpec, run, write_outputs
from .offline import InstanceFileError
from .policies import PolicyFileError

EXIT_OK, EXIT_FAILED, EXIT_INVALID = 0, 1, 2

_FIELD_TYPES = typing.get_type_hints(ExperimentSpec)


def parse_grid(text: str) -> tuple:
    """``a,b,c`` or ``start:stop:step`` (inclusive of ``stop``)."""
    text = text.strip()
    if ":" in text:
        parts = [float(p) for p in text.split(":")]
        if len(parts) != 3 or parts[2] <= 0:
            raise ValueError(f"grid range must be start:stop:step, got {text!r}")
        start, stop, step = parts
        n = int(round((stop - start) / step))
        return tuple(round(start + step * m, 12) for m in range(n + 1))
    return tuple(float(p) for p in text.split(",") if p.strip())


def _convert(name: str, raw: str):
    hint = _FIELD_TYPES[name]
    raw = raw.strip()
    if name in ("rho", "grid"):
        return parse_grid(raw)
    if name == "k_values":
        return tuple(int(v) for v in parse_grid(raw))
    if name == "mu_pairs":
        pairs = []
        for item in raw.split(";"):
            a, b = item.split(",")
            pairs.append((float(a), float(b)))
        return tuple(pairs)
    if hint is bool:
        if raw.lower() in ("1", "true", "yes", "on"):
            return True
        if raw.lower() in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"{name}: expected a boolean, got {raw!r}")
    if hint is int:
        return int(raw)
    if hint is float:
        return float(raw)
    if raw.lower() in ("", "none"):
        return None
    return raw


def read_config(path: str) -> dict:
    """Flat ``key = value`` file; ``#`` starts a comment."""
    values = {}
    known = {f.name for f in fields(ExperimentSpec)} - {"kind"}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, val = line.partition("=")
            key = key.strip().replace("-", "_")
            if not sep or key not in known:
                raise ValueError(f"{path}:{lineno}: unknown or malformed setting {line!r}")
            values[key] = _convert(key, val)
    return values


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="elasticsched",
        description="Scheduling experiments for elastic and inelastic jobs on k servers.",
        formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    parser.add_argument("kind", choices=sorted(RUNNERS), help="experiment to run")
    d = ExperimentSpec("heatmap")
    common = parser.add_argument_group("common")
    common.add_argument("--config", help="flat key = value settings file")
    common.add_argument("--out", default=None, help=f"output directory (default {d.out})")
    common.add_argument("--seed", default=None, help=f"64-bit seed (default {d.seed})")
    common.add_argument("--rho", default=None, help="loads, list or start:stop:step (default 0.5,0.7,0.9)")
    common.add_argument("--k", default=None, help=f"server count (default {d.k})")
    common.add_argument("--grid", default=None, help="mu grid, list or start:stop:step (default 0.25:4:0.25)")
    common.add_argument("--workers", default=None, help=f"worker processes (default {d.workers})")
    extra = parser.add_argument_group("experiment specific")
    for name, help_text in (
            ("mu_E", "elastic service rate for lines/validate/dominance"),
            ("mu_I", "inelastic service rate for counterexample/dominance"),
            ("k_values", "server counts for highk"),
            ("mu_pairs", "mu_I,mu_E pairs for highk separated by ';'"),
            ("events", "events per replication for validate (0 = per-load default)"),
            ("replications", "minimum replications for validate"),
            ("max_replications", "replication cap for validate (0 = per-load default)"),
            ("target_rel_halfwidth", "stop adding replications below this relative CI"),
            ("tolerance", "allowed relative error for validate"),
            ("transient_replications", "replications for counterexample"),
            ("n_seeds", "arrival sequences for dominance"),
            ("n_random_policies", "random class-P policies for dominance"),
            ("horizon", "arrival horizon for dominance"),
            ("instance", "instance file for offline-certify"),
            ("n_instances", "random instances for offline-certify"),
            ("max_jobs", "largest random instance"),
            ("speed", "speed of the certified schedule"),
            ("exhaustive", "certify every small instance instead of random ones")):
        extra.add_argument("--" + name.replace("_", "-"), dest=name, default=None,
                           help=f"{help_text} (default {getattr(d, name)})")
    return parser


def spec_from_args(args: argparse.Namespace) -> ExperimentSpec:
    values = read_config(args.config) if args.config else {}
    for f in fields(ExperimentSpec):
        if f.name == "kind":
            continue
        raw = getattr(args, f.name, None)
        if raw is not None:
            values[f.name] = _convert(f.name, str(raw))
    return ExperimentSpec(kind=args.kind, **values)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        spec = spec_from_args(args)
        result = run(spec)
    except (ValueError, InvalidParams, InstanceFileError, PolicyFileError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    for line in result.summary:
        print(line)
    for path in write_outputs(result, spec.out):
        print(f"wrote {path}")
    print(f"{result.name}: {'PASS' if result.ok else 'FAIL'}")
    return EXIT_OK if result.ok else EXIT_FAILED


if __name__ == "__main__":
    sys.exit(main())
