"""``stein-sparse`` command-line interface.

Exit codes: 0 success, 2 invalid input or arguments, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import io
from .coding import METHODS, code_matrix
from .containers import SpdDictionary
from .descriptors import extract_grid, read_pgm
from .exceptions import ConvergenceError, ValidationError
from .experiments import EXPERIMENTS, run_experiment
from .kernel import gram
from .learning import NORMS, RULES, learn
from .synth import (
    SPREADS,
    SynthClassificationConfig,
    SynthDictionaryConfig,
    gen_classification,
    gen_dictionary_task,
)

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_NUMERICAL = 3

logger = logging.getLogger("stein_sparse")


def _emit(text, out):
    if out is None or str(out) == "-":
        sys.stdout.write(text)
    else:
        Path(out).write_text(text)


def cmd_gram(args):
    spd_set, stored = io.read_matrix_set(args.input)
    if len(spd_set) == 0:
        raise ValidationError("input contains no matrices")
    sigma = args.sigma if args.sigma is not None else stored
    g = gram(spd_set.matrices, sigma=sigma, allow_indefinite=args.allow_indefinite)
    _emit(io.format_gram(g), args.output)
    if not g.psd_ok:
        logger.warning("Gram matrix min eigenvalue %.3e", g.min_eigenvalue)
    return EXIT_OK


def cmd_code(args):
    queries, _ = io.read_matrix_set(args.queries)
    dictionary = io.read_dictionary(args.dictionary, args.sigma, args.allow_indefinite)
    if len(queries) and queries.dim != dictionary.dim:
        raise ValidationError(f"query dim {queries.dim} != dictionary dim {dictionary.dim}")
    V, lams, _, kkt = code_matrix(queries.matrices, dictionary, args.lam,
                                  max_iter=args.max_iter, method=args.method)
    _emit(io.format_codes(V.reshape(len(queries), len(dictionary)), lams, kkt), args.output)
    return EXIT_OK


def cmd_learn(args):
    samples, stored = io.read_matrix_set(args.samples)
    if len(samples) == 0:
        raise ValidationError("no training samples")
    sigma = args.sigma if args.sigma is not None else stored
    dictionary, trace = learn(samples, args.atoms, args.lam, args.iters, args.seed,
                              init=args.init, sigma=sigma, rule=args.rule, norm=args.norm,
                              early_stop=not args.no_early_stop)
    io.write_dictionary(args.output, dictionary)
    trace_path = args.trace or str(args.output) + ".trace.csv"
    Path(trace_path).write_text(io.format_trace(trace))
    logger.info("learned %d atoms in %d iterations (%s); energy %.6g -> %.6g",
                len(dictionary), len(trace), trace.stop_reason, trace.energies[0],
                trace.final_energy)
    return EXIT_OK


def _experiment_params(args):
    params = {}
    if args.config:
        try:
            params = json.loads(Path(args.config).read_text())
        except json.JSONDecodeError as exc:
            raise ValidationError(f"config is not valid JSON: {exc}") from None
        if not isinstance(params, dict):
            raise ValidationError("config must be a JSON object")
    flags = {"trials": args.trials, "seed": args.seed, "lam": args.lam, "atoms": args.atoms,
             "iters": args.iters, "spread": args.spread}
    params.update({k: v for k, v in flags.items() if v is not None})
    if args.images:
        params["images"] = args.images
    return params


def cmd_experiment(args):
    report = run_experiment(args.name, **_experiment_params(args))
    _emit(report.to_csv(), args.output)
    logger.info("%s; %.1f s total trial time", report.summary(), report.total_seconds)
    if args.config_echo:
        Path(args.config_echo).write_text(json.dumps(report.config, indent=2, default=str) + "\n")
    return EXIT_OK


def cmd_synth(args):
    prefix = Path(args.prefix)
    if args.task == "classify":
        cfg = SynthClassificationConfig(spread=args.spread or "easy", seed=args.seed or 0)
        train, test = gen_classification(cfg)
        io.write_matrix_set(f"{prefix}train.txt", train.matrices, train.labels)
        io.write_matrix_set(f"{prefix}test.txt", test.matrices, test.labels)
    else:
        samples, sources = gen_dictionary_task(SynthDictionaryConfig(seed=args.seed or 0))
        io.write_matrix_set(f"{prefix}samples.txt", samples.matrices)
        io.write_matrix_set(f"{prefix}sources.txt", sources.matrices, sources.labels)
    return EXIT_OK


def cmd_describe(args):
    descriptors = extract_grid(read_pgm(args.image), args.block, args.eps, args.label)
    _emit(io.format_matrix_set(descriptors.matrices, descriptors.labels), args.output)
    return EXIT_OK


def build_parser():
    p = argparse.ArgumentParser(prog="stein-sparse",
                                description="Sparse coding and dictionary learning on SPD "
                                            "matrices with the Stein kernel.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def kernel_flags(sp):
        sp.add_argument("--sigma", type=float, help="kernel bandwidth (default d/2)")
        sp.add_argument("--allow-indefinite", action="store_true",
                        help="accept sigma outside the positive-definite set")

    g = sub.add_parser("gram", help="Stein-kernel Gram matrix of a matrix set")
    g.add_argument("input")
    g.add_argument("-o", "--output")
    kernel_flags(g)
    g.set_defaults(func=cmd_gram)

    c = sub.add_parser("code", help="sparse codes of queries over a dictionary")
    c.add_argument("queries")
    c.add_argument("dictionary")
    c.add_argument("-o", "--output")
    c.add_argument("--lambda", dest="lam", type=float,
                   help="penalty (default 0.01 * max kernel value per query)")
    c.add_argument("--method", choices=METHODS, default="feature-sign")
    c.add_argument("--max-iter", type=int, default=10000)
    kernel_flags(c)
    c.set_defaults(func=cmd_code)

    lr = sub.add_parser("learn", help="learn a dictionary")
    lr.add_argument("samples")
    lr.add_argument("-o", "--output", required=True, help="dictionary file")
    lr.add_argument("--trace", help="trace file (default <output>.trace.csv)")
    lr.add_argument("--atoms", type=int, required=True)
    lr.add_argument("--lambda", dest="lam", type=float, default=0.01)
    lr.add_argument("--iters", type=int, default=30)
    lr.add_argument("--init", choices=("random", "kmeans"), default="kmeans")
    lr.add_argument("--seed", type=int, default=0)
    lr.add_argument("--rule", choices=RULES, default="stationary")
    lr.add_argument("--norm", choices=NORMS, default="none")
    lr.add_argument("--no-early-stop", action="store_true")
    lr.add_argument("--sigma", type=float)
    lr.set_defaults(func=cmd_learn)

    e = sub.add_parser("experiment", help="run a repeated-trial experiment")
    e.add_argument("name", choices=sorted(EXPERIMENTS))
    e.add_argument("--config", help="JSON object of experiment parameters")
    e.add_argument("-o", "--output", help="report CSV (default stdout)")
    e.add_argument("--config-echo", help="write the effective configuration as JSON")
    e.add_argument("--trials", type=int)
    e.add_argument("--seed", type=int)
    e.add_argument("--lambda", dest="lam", type=float)
    e.add_argument("--atoms", type=int)
    e.add_argument("--iters", type=int)
    e.add_argument("--spread", choices=sorted(SPREADS))
    e.add_argument("--images", nargs="+", help="graymap files for the texture experiment")
    e.set_defaults(func=cmd_experiment)

    s = sub.add_parser("synth", help="write a synthetic data set")
    s.add_argument("task", choices=("classify", "dict"))
    s.add_argument("prefix", help="output path prefix")
    s.add_argument("--seed", type=int)
    s.add_argument("--spread", choices=sorted(SPREADS))
    s.set_defaults(func=cmd_synth)

    d = sub.add_parser("describe", help="region covariance descriptors of a graymap")
    d.add_argument("image")
    d.add_argument("-o", "--output")
    d.add_argument("--block", type=int, default=32)
    d.add_argument("--eps", type=float, default=1e-6)
    d.add_argument("--label", type=int)
    d.set_defaults(func=cmd_describe)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    try:
        return args.func(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (ConvergenceError, np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
