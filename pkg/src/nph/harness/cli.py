"""``nph`` command line: retrieve, bench, bounds, verify.

Exit codes: 0 success, 1 failed verification, 2 invalid input, 3 I/O or
file-format error.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from ..bounds import bound_report
from ..dynamics import Dense, DynamicsConfig, Linear, Prf, Sparse, feature_scale_for, retrieve
from ..errors import FormatError, ValidationError
from ..kernels import PrfConfig
from ..masks import build_mask, parse_mask_spec
from .experiments import KINDS, VARIANTS, ExperimentSpec, run_experiment
from .io import load_patterns, read_csv_rows, save_results

EXIT_OK, EXIT_FAILED, EXIT_INVALID, EXIT_IO = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INVALID, f"{self.prog}: error: {message}\n")


def _ints(text):
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _floats(text):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _dynamics_args(p):
    p.add_argument("--variant", choices=VARIANTS, default="dense")
    p.add_argument("--mask", default="full", help="full | random:k=<k>,seed=<s> | window:w=<w> | topk:k=<K>")
    p.add_argument("--beta", type=float, default=None, help="inverse temperature (default 1/sqrt(d))")
    p.add_argument("--tol", type=float, default=1e-8)
    p.add_argument("--max-iters", type=int, default=100)
    p.add_argument("--renormalize", action="store_true",
                   help="extension: rescale sparse weights to sum to one over the mask")
    p.add_argument("--prf-features", type=int, default=256)
    p.add_argument("--prf-seed", type=int, default=0)


def build_parser():
    parser = _Parser(prog="nph", description="Nonparametric modern Hopfield retrieval tools.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    r = sub.add_parser("retrieve", help="retrieve memories for one or more queries")
    r.add_argument("--memories", required=True, help="pattern file (.csv or .nphb)")
    r.add_argument("--query", required=True, help="CSV file, one query per row")
    _dynamics_args(r)
    r.add_argument("--position", type=int, default=None,
                   help="window-mask position (default: the query's row index)")
    r.add_argument("--record", action="store_true", help="include trajectories and energies")
    r.add_argument("--out", help="write JSON here instead of stdout")

    b = sub.add_parser("bench", help="run a retrieval experiment")
    b.add_argument("kind", choices=KINDS)
    b.add_argument("--d", type=_ints, default=[64])
    b.add_argument("--m-range", type=_ints, default=[10, 25, 50, 100, 200])
    b.add_argument("--trials", type=int, default=50)
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--theta", type=float, default=0.2)
    b.add_argument("--radius", type=float, default=None, help="pattern norm (default sqrt(d))")
    b.add_argument("--noise", type=_floats, default=None, help="noise variances (default 0.1..1.4)")
    b.add_argument("--k-range", type=_ints, default=[], help="support sizes for the masked timing sweep")
    b.add_argument("--p", type=float, default=0.95, help="success probability for the capacity bound")
    _dynamics_args(b)
    b.add_argument("--threads", type=int, default=None, help="worker threads (default NPH_THREADS or CPU count)")
    b.add_argument("--omit-timing", action="store_true", help="drop wall-clock fields from the output")
    b.add_argument("--out", help="JSON or .csv output path (default stdout, JSON)")

    d = sub.add_parser("bounds", help="evaluate the closed-form bounds")
    d.add_argument("--d", type=int, required=True)
    d.add_argument("--m", type=float, required=True)
    d.add_argument("--R", type=float, required=True)
    d.add_argument("--beta", type=float, default=None)
    d.add_argument("--k", type=int, required=True)
    d.add_argument("--p", type=float, default=0.95)
    d.add_argument("--sweep", choices=("k", "d", "beta"))
    d.add_argument("--values", type=_floats, default=None, help="sweep values")
    d.add_argument("--memories", help="optional store for error and well-separation results")
    d.add_argument("--query", help="CSV query (first row) for the error bound")
    d.add_argument("--mu", type=int, default=None, help="target memory index (0-based)")
    d.add_argument("--mask", default="full")

    v = sub.add_parser("verify", help="run the acceptance checks")
    v.add_argument("--only", type=_ints, default=None, help="criterion numbers to run")
    return parser


def _emit(text, out):
    if out:
        with open(out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def cmd_retrieve(args):
    store = load_patterns(args.memories)
    queries = read_csv_rows(args.query)
    if queries.shape[1] != store.dim:
        raise ValidationError(f"queries have {queries.shape[1]} columns, memories have d={store.dim}")
    beta = args.beta if args.beta is not None else None
    kind, params = parse_mask_spec(args.mask)
    if args.variant != "sparse" and kind != "full":
        raise ValidationError(f"mask {args.mask!r} needs --variant sparse")
    base = DynamicsConfig(beta=beta, tol=args.tol, max_iters=args.max_iters)
    b = base.beta_for(store.dim)
    prf = PrfConfig(args.prf_features, args.prf_seed, store.dim) if args.variant == "prf" else None
    results = []
    for i, x in enumerate(queries):
        if args.variant == "dense":
            variant = Dense()
        elif args.variant == "sparse":
            pos = args.position if args.position is not None else i
            variant = Sparse(build_mask(kind, params, store, x, pos), args.renormalize)
        elif args.variant == "linear":
            variant = Linear(feature_scale_for(b))
        else:
            variant = Prf(prf, feature_scale_for(b))
        cfg = DynamicsConfig(variant, beta, args.tol, args.max_iters)
        out = retrieve(store, x, cfg, record=args.record)
        entry = {
            "query": i,
            "retrieved": out.retrieved.tolist(),
            "steps": out.steps,
            "converged": out.converged,
        }
        if isinstance(variant, Sparse):
            entry["mask"] = list(variant.mask.indices)
        if args.record:
            entry["trajectory"] = [t.tolist() for t in out.trajectory]
            entry["energy_trace"] = out.energy_trace
        results.append(entry)
    doc = {"variant": args.variant, "beta": b, "results": results}
    _emit(json.dumps(doc, indent=2) + "\n", args.out)
    return EXIT_OK


def cmd_bench(args):
    spec = ExperimentSpec(
        kind=args.kind, d=args.d, m_range=args.m_range, variant=args.variant, mask=args.mask,
        beta=args.beta, trials=args.trials, theta=args.theta, seed=args.seed, radius=args.radius,
        tol=args.tol, max_iters=args.max_iters, renormalize=args.renormalize,
        prf_features=args.prf_features, prf_seed=args.prf_seed, k_range=args.k_range, p=args.p,
        **({"noise": args.noise} if args.noise is not None else {}),
    )
    if args.threads is not None and args.threads < 1:
        raise ValidationError("--threads must be >= 1")
    table = run_experiment(spec, threads=args.threads)
    if args.out:
        save_results(table, args.out, omit_timing=args.omit_timing)
    else:
        sys.stdout.write(table.to_json(omit_timing=args.omit_timing))
    return EXIT_OK


_DEFAULT_SWEEPS = {
    "k": [1, 4, 16, 64],
    "d": [8, 16, 32, 64],
    "beta": [0.1, 0.5, 1.0, 2.0, 5.0, 10.0, 20.0],
}


def cmd_bounds(args):
    store = load_patterns(args.memories) if args.memories else None
    x = read_csv_rows(args.query)[0] if args.query else None
    mask = None
    if store is not None:
        kind, params = parse_mask_spec(args.mask)
        mu = args.mu if args.mu is not None else 0
        mask = build_mask(kind, params, store, x if x is not None else store.memories[:, mu], mu)
    beta = args.beta if args.beta is not None else 1.0 / np.sqrt(args.d)

    def one(d=args.d, k=args.k, b=beta):
        return bound_report(d, args.m, args.R, b, k, args.p, store=store, x=x, mu=args.mu, mask=mask).to_dict()

    if args.sweep is None:
        doc = one()
    else:
        values = args.values or _DEFAULT_SWEEPS[args.sweep]
        reports = []
        for v in values:
            if args.sweep == "k":
                reports.append(one(k=int(v)))
            elif args.sweep == "d":
                reports.append(one(d=int(v), b=args.beta if args.beta is not None else 1.0 / np.sqrt(v)))
            else:
                reports.append(one(b=float(v)))
        doc = {"sweep": args.sweep, "values": values, "reports": reports}
    sys.stdout.write(json.dumps(doc, indent=2) + "\n")
    return EXIT_OK


def cmd_verify(args):
    from ..verify import run_all

    results = run_all(only=args.only, stream=sys.stdout)
    failed = [r for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} criteria passed")
    return EXIT_FAILED if failed else EXIT_OK


_COMMANDS = {"retrieve": cmd_retrieve, "bench": cmd_bench, "bounds": cmd_bounds, "verify": cmd_verify}


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except ValidationError as exc:
        print(f"nph: invalid input: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (FormatError, OSError) as exc:
        print(f"nph: i/o error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
