"""Command line entry point ``rmt``."""
from __future__ import annotations

import argparse
import json
import sys

from .eigensolver import spectrum_of, write_spectra_csv
from .harness import ExperimentConfig, emit_outputs, fit_loglog, read_results_csv, run_experiment
from .kernels import matrix_kernel, sine_kernel, w_k
from .limits import limit_law
from .sampler import EnsembleSpec, sample


def _cmd_experiment(args) -> int:
    config = ExperimentConfig.load(args.config)
    result = run_experiment(config, workers=args.workers)
    paths = dict(config.outputs)
    if args.out_prefix:
        paths = {k: f"{args.out_prefix}.{k}" for k in ("csv", "json", "svg")}
    emit_outputs(result, paths)
    for r in result.records:
        print(f"n={r['n']:>6d}  E_N={r['E_N']:.6f}  stderr={r['stderr']:.6f}  failures={r['failures']}")
    if result.fit:
        print(f"fit: -log E_N = {result.fit['a']:.4f} log N + {result.fit['b']:.4f}"
              f"  (residual {result.fit['residual']:.3e})")
    return 0


def _cmd_limit_law(args) -> int:
    mode = args.mode or ("exact" if args.beta in (1, 2, 4) else "surmise")
    law = limit_law(args.beta, args.smax, mode)
    law.to_csv(args.out)
    print(f"beta={args.beta:g} method={law.method} points={len(law.grid)} -> {args.out}")
    return 0


def _spec_from_args(args) -> EnsembleSpec:
    if args.spec:
        with open(args.spec) as fh:
            return EnsembleSpec.from_dict(json.load(fh))
    beta = int(args.beta) if float(args.beta).is_integer() else args.beta
    return EnsembleSpec(args.family, beta, args.n, args.entry_dist, args.symmetry, args.seed)


def _cmd_sample(args) -> int:
    spec = _spec_from_args(args)
    spectra = [spectrum_of(sample(spec, stream=t)) for t in range(args.trials)]
    if args.out:
        write_spectra_csv(args.out, spectra)
    else:
        print("trial,index,lambda")
        for t, s in enumerate(spectra):
            for i, lam in enumerate(s.values):
                print(f"{t},{i},{float(lam)!r}")
    return 0


def _cmd_fit(args) -> int:
    n, e = read_results_csv(args.csv)
    a, b, res = fit_loglog((n, e))
    print(json.dumps({"a": a, "b": b, "residual": res}))
    return 0


def _cmd_kernel(args) -> int:
    if args.beta == 2 and args.points is None:
        print(json.dumps({"K2": float(sine_kernel(args.x, args.y))}))
    elif args.points is not None:
        pts = [float(p) for p in args.points.split(",")]
        print(json.dumps({"beta": args.beta, "k": len(pts), "W_k": w_k(args.beta, pts)}))
    else:
        v = matrix_kernel(args.beta, args.x, args.y)
        print(json.dumps({"S": float(v.S), "D": float(v.D), "I": float(v.I), "St": float(v.St)}))
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="rmt", description="Random-matrix spacing statistics")
    sub = p.add_subparsers(dest="command", required=True)

    e = sub.add_parser("experiment", help="run a Monte Carlo sweep from a JSON config")
    e.add_argument("--config", required=True)
    e.add_argument("--workers", type=int, default=None, help="threads (default $RMT_WORKERS or all cores)")
    e.add_argument("--out-prefix", default=None, help="write PREFIX.csv/.json/.svg instead of config outputs")
    e.set_defaults(func=_cmd_experiment)

    ll = sub.add_parser("limit-law", help="tabulate the limiting spacing law")
    ll.add_argument("--beta", type=float, required=True)
    ll.add_argument("--smax", type=float, default=6.0)
    ll.add_argument("--mode", choices=("exact", "surmise"), default=None)
    ll.add_argument("--out", required=True)
    ll.set_defaults(func=_cmd_limit_law)

    s = sub.add_parser("sample", help="sample spectra and write trial,index,lambda CSV")
    s.add_argument("--spec", default=None, help="EnsembleSpec JSON file")
    s.add_argument("--family", default="gaussian-invariant")
    s.add_argument("--beta", type=float, default=2)
    s.add_argument("--n", type=int, default=100)
    s.add_argument("--entry-dist", default=None, help="e.g. normal, beta(2,5), chi-squared(3)")
    s.add_argument("--symmetry", default=None)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--trials", type=int, default=1)
    s.add_argument("--out", default=None)
    s.set_defaults(func=_cmd_sample)

    f = sub.add_parser("fit", help="log-log fit of an n,E_N,stderr CSV")
    f.add_argument("--csv", required=True)
    f.set_defaults(func=_cmd_fit)

    k = sub.add_parser("kernel", help="kernel evaluations")
    ksub = k.add_subparsers(dest="kernel_command", required=True)
    ke = ksub.add_parser("eval", help="print kernel values")
    ke.add_argument("--beta", type=int, choices=(1, 2, 4), default=2)
    ke.add_argument("--x", type=float, default=0.0)
    ke.add_argument("--y", type=float, default=0.0)
    ke.add_argument("--points", default=None, help="comma separated points: print W_k instead")
    ke.set_defaults(func=_cmd_kernel)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:
        print(f"rmt: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
