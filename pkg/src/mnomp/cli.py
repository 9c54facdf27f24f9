"""
Command-line entry point ``mnomp``.

Subcommands::

    mnomp threshold --poe P --n N --t T --sigma2 S
    mnomp pmiss --snr-db DB --t T --tau TAU --sigma2 S [--alpha A]
    mnomp extract INPUT (--tau TAU | --poe P --sigma2 S) [--gamma G --rs RS --rc RC --max-components M]
    mnomp crb --config truth.json --n N
    mnomp bench --spec spec.json --out results/

``extract`` reads either a CSV snapshot matrix (one row per sensor, columns
``re_1, im_1, re_2, im_2, ...``) or a ground-truth JSON file, which is
synthesized with ``--n`` sensors and ``--seed`` before extraction.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .crb import crb_frequencies, from_normalized
from .estimator import MnompConfig, extract_spectrum
from .harness import bench
from .signal_model import TWO_PI, GroundTruth, synthesize
from .stopping import p_miss, threshold_from_poe


def read_snapshot_csv(path) -> np.ndarray:
    """Load an ``N x T`` complex matrix stored as interleaved real/imaginary columns."""
    data = np.loadtxt(path, delimiter=",", ndmin=2, comments="#")
    if data.shape[1] % 2:
        raise ValueError(f"{path}: expected an even number of columns (re, im pairs), got {data.shape[1]}")
    return data[:, 0::2] + 1j * data[:, 1::2]


def write_snapshot_csv(path, Y) -> None:
    Y = np.asarray(Y, dtype=complex)
    if Y.ndim == 1:
        Y = Y[:, None]
    out = np.empty((Y.shape[0], 2 * Y.shape[1]))
    out[:, 0::2], out[:, 1::2] = Y.real, Y.imag
    np.savetxt(path, out, delimiter=",", fmt="%.17g")


def _pairs(v) -> list:
    return [[float(z.real), float(z.imag)] for z in np.atleast_1d(v)]


def _load_input(args) -> np.ndarray:
    path = Path(args.input)
    if path.suffix.lower() == ".json":
        d = json.loads(path.read_text())
        n = args.n if args.n is not None else d.get("n")
        if n is None:
            raise SystemExit("extract: a ground-truth JSON input needs --n (or an 'n' field)")
        seed = args.seed if args.seed is not None else d.get("seed", 0)
        truth = GroundTruth.from_dict(d)
        return synthesize(truth, int(n), np.random.default_rng(seed))
    return read_snapshot_csv(path)


def _cmd_threshold(args) -> int:
    print(repr(threshold_from_poe(args.poe, args.n, args.t, args.sigma2).tau))
    return 0


def _cmd_pmiss(args) -> int:
    print(repr(p_miss(args.snr_db, args.t, args.tau, args.sigma2, args.alpha)))
    return 0


def _cmd_extract(args) -> int:
    Y = _load_input(args)
    n, t = Y.shape
    if args.tau is not None:
        tau = args.tau
    else:
        if args.sigma2 is None:
            raise SystemExit("extract: --poe requires --sigma2")
        tau = threshold_from_poe(args.poe, n, t, args.sigma2).tau
    cfg = MnompConfig(tau=tau, gamma=args.gamma, r_single=args.rs, r_cyclic=args.rc,
                      max_components=args.max_components)
    est, trace = extract_spectrum(Y, cfg)
    out = {
        "components": [{"omega": c.omega, "amplitudes": _pairs(c.amplitudes)} for c in est.components],
        "trace": trace.to_dict(),
        "stop_reason": trace.stop_reason,
        "tau": tau,
    }
    json.dump(out, sys.stdout, indent=2)
    print()
    return 0


def _cmd_crb(args) -> int:
    d = json.loads(Path(args.config).read_text())
    n = args.n if args.n is not None else d.get("n")
    if n is None:
        raise SystemExit("crb: the sensor count is needed via --n or an 'n' field")
    truth = GroundTruth.from_dict(d)
    crb = crb_frequencies(from_normalized(truth, int(n)), int(n))
    out = {"crb_omega": crb.tolist(),
           "crb_db_vs_dft": (10 * np.log10(crb / (TWO_PI / int(n)) ** 2)).tolist()}
    json.dump(out, sys.stdout, indent=2)
    print()
    return 0


def _cmd_bench(args) -> int:
    config = json.loads(Path(args.spec).read_text()) if args.spec else {}
    if args.workers is not None:
        config["workers"] = args.workers
    manifest = bench(config, args.out, only=args.only)
    print(json.dumps({k: manifest[k] for k in ("seed", "git_describe", "wall_time_s")}))
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mnomp", description=__doc__.split("\n\n")[0].strip())
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("threshold", help="stopping threshold tau for a nominal overestimation probability")
    s.add_argument("--poe", type=float, required=True)
    s.add_argument("--n", type=int, required=True)
    s.add_argument("--t", type=int, required=True)
    s.add_argument("--sigma2", type=float, required=True)
    s.set_defaults(func=_cmd_threshold)

    s = sub.add_parser("pmiss", help="predicted miss probability of a lone sinusoid")
    s.add_argument("--snr-db", type=float, required=True)
    s.add_argument("--t", type=int, required=True)
    s.add_argument("--tau", type=float, required=True)
    s.add_argument("--sigma2", type=float, required=True)
    s.add_argument("--alpha", type=float, default=0.88)
    s.set_defaults(func=_cmd_pmiss)

    s = sub.add_parser("extract", help="estimate sinusoids from a snapshot matrix")
    s.add_argument("input", help="CSV (re,im interleaved per snapshot) or ground-truth JSON")
    g = s.add_mutually_exclusive_group(required=True)
    g.add_argument("--tau", type=float)
    g.add_argument("--poe", type=float)
    s.add_argument("--sigma2", type=float)
    s.add_argument("--gamma", type=int, default=4)
    s.add_argument("--rs", type=int, default=1)
    s.add_argument("--rc", type=int, default=1)
    s.add_argument("--max-components", type=int)
    s.add_argument("--n", type=int, help="sensor count when synthesizing from ground-truth JSON")
    s.add_argument("--seed", type=int, help="noise seed when synthesizing from ground-truth JSON")
    s.set_defaults(func=_cmd_extract)

    s = sub.add_parser("crb", help="frequency Cramer-Rao bounds for a ground-truth mixture")
    s.add_argument("--config", required=True)
    s.add_argument("--n", type=int)
    s.set_defaults(func=_cmd_crb)

    s = sub.add_parser("bench", help="run the Monte-Carlo figure experiments")
    s.add_argument("--spec", help="JSON with per-figure overrides, 'seed' and 'workers'")
    s.add_argument("--out", required=True)
    s.add_argument("--only", nargs="+", help="subset of figure names")
    s.add_argument("--workers", type=int)
    s.set_defaults(func=_cmd_bench)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ValueError, OSError) as err:
        print(f"mnomp {args.command}: error: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
