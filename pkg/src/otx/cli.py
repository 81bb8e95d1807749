"""Command line entry point: ``otx run | oracle | bounds``."""

import argparse
import json
import math
import sys

from .core import OTError, empirical_bound, small_delta, talagrand_bound
from .harness import compare_bounds, load_config, oracle_report, run
from .reductions import sphere_set_transport_cost_bound


def _u64(text):
    value = int(text)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return value


def build_parser():
    parser = argparse.ArgumentParser(prog="otx", description="Online empirical transport experiments.")
    sub = parser.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run an experiment config")
    r.add_argument("--config", required=True)
    r.add_argument("--seed", required=True, type=_u64)
    r.add_argument("--out", required=True)
    r.add_argument("--format", choices=("csv", "json"))
    r.add_argument("--workers", type=int, default=1)

    o = sub.add_parser("oracle", help="exact values on a small fixture")
    o.add_argument("--fixture", required=True, help="claim42[:n[:eps]], remark40, remark41 or a JSON path")

    b = sub.add_parser("bounds", help="closed-form bound values")
    b.add_argument("--p", type=float, required=True)
    b.add_argument("--n", type=int, required=True)
    b.add_argument("--k", type=int, required=True)
    b.add_argument("--epsilon", type=float, required=True)
    return parser


def _bounds(args):
    out = {"p": args.p, "n": args.n, "k": args.k, "epsilon": args.epsilon}
    kl = math.log(1.0 / args.epsilon)
    out["empirical_bound"] = empirical_bound(args.p, args.k)
    out["small_delta"] = small_delta(args.p, args.n, args.k)
    if 1 <= args.p <= 2:
        out["talagrand_bound"] = talagrand_bound(args.p, args.n, kl)
        out["set_transport_lp_bound"] = out["talagrand_bound"] ** (1.0 / args.p) + out["small_delta"]
    out["sphere_l2_bound"] = sphere_set_transport_cost_bound(args.epsilon)
    out["sphere_spherical_bound"] = math.pi * out["sphere_l2_bound"]
    return out


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        if args.command == "bounds":
            print(json.dumps(_bounds(args), indent=2))
            return 0
        if args.command == "oracle":
            print(json.dumps(oracle_report(args.fixture), indent=2, sort_keys=True))
            return 0
        cfg = load_config(args.config, seed=args.seed)
        result = run(cfg, workers=args.workers, out=args.out, fmt=args.format)
        if result.partial:
            print(f"partial result: {result.error}", file=sys.stderr)
            return 1
        if result.bound_delta is not None or result.children:
            verdict = compare_bounds(result)
            print(verdict)
            return 2 if verdict.status == "FAIL" else 0
        print(f"mean_cost={result.mean_cost!r}")
        return 0
    except (OTError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
