"""Command-line entry point: ``csbsd {gen-matrix,gen-instance,reconstruct,experiment,selftest}``."""

from __future__ import annotations

import argparse
import logging
import sys

import numpy as np

from . import bp, harness, model, oracles, sensing
from .reconstruct import CsBsdConfig, cs_bsd

log = logging.getLogger("csbsd")

EXIT_OK, EXIT_INVALID, EXIT_ANOMALY = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _write_vector_csv(path, header, rows):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(header + "\n")
        for row in rows:
            fh.write(",".join(row) + "\n")


def _read_vector(path):
    """One value per line, or a CSV whose last column holds the values."""
    vals = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            cell = line.split(",")[-1]
            try:
                vals.append(float(cell))
            except ValueError:
                if vals:
                    raise
                continue  # header
    return np.array(vals)


def cmd_gen_matrix(args):
    graph = sensing.generate(args.n, args.m, args.l, seed=args.seed)
    sensing.save(graph, args.out)
    log.info("wrote %s (%d edges)", args.out, graph.n_edges)
    return EXIT_OK


def cmd_gen_instance(args):
    graph = sensing.load(args.graph)
    prior = model.PriorParams(args.q, args.sigma_x)
    seeds = np.random.SeedSequence(args.seed).spawn(2)
    signal = model.generate_signal(graph.n, prior, seed=seeds[0], n_d=args.n_d)
    if args.snr is not None:
        sigma_n = model.sigma_for_target_snr(graph, signal, args.snr)
    else:
        sigma_n = args.sigma_n
    meas = model.sense(signal, graph, sigma_n, seed=seeds[1])
    _write_vector_csv(args.out_z, "j,z", ([str(j), repr(float(v))] for j, v in enumerate(meas.z)))
    if args.out_truth:
        _write_vector_csv(args.out_truth, "i,x,s",
                          ([str(i), repr(float(v)), str(int(s))]
                           for i, (v, s) in enumerate(zip(signal.values, signal.states))))
    print(f"sigma_n={sigma_n!r}")
    return EXIT_OK


def cmd_reconstruct(args):
    graph = sensing.load(args.graph)
    z = _read_vector(args.z)
    if z.shape != (graph.m,):
        raise ValueError(f"measurement file has {z.size} values but the graph has {graph.m} rows")
    prior = model.PriorParams(args.q, args.sigma_x, args.sigma_n)
    cfg = CsBsdConfig(epsilon=args.epsilon, max_iters=args.max_iters, conv_mode=args.conv_mode,
                      noise_model=args.noise_model, n_d=args.n_d, damping=args.damping, debug_dump=args.debug_dump)
    res = cs_bsd(z, graph, prior, cfg)
    _write_vector_csv(args.out, "i,x_hat,s_hat",
                      ([str(i), repr(float(v)), str(int(s))]
                       for i, (v, s) in enumerate(zip(res.estimate, res.states))))
    log.info("iterations=%d residual=%.6g support=%d", res.iterations_run,
             res.residual_trace[-1], int(res.states.sum()))
    return EXIT_ANOMALY if res.diverged and args.strict else EXIT_OK


_OVERRIDES = ("n", "m_over_n", "q", "l", "n_d", "sigma_x", "snr_grid_db", "trials", "seed",
              "output", "conv_mode", "noise_model", "max_iters", "epsilon", "stopping", "workers",
              "max_diverged_fraction")


def cmd_experiment(args):
    overrides = {k: getattr(args, k) for k in _OVERRIDES}
    overrides["kind"] = args.kind
    config = harness.load_config(args.config, overrides)
    result = harness.run_experiment(config)
    harness.write_csv(config.output, config.kind, result.rows)
    log.info("wrote %d rows to %s", len(result.rows), config.output)
    if config.kind == "ser":
        target = 1.0 / (config.n * config.trials)
        for ratio in config.m_over_n:
            rows = [r for r in result.rows if r.m_over_n == ratio]
            thr = harness.threshold_snr(rows, target)
            log.info("M/N=%g: zero-error threshold %.2f dB, avg SNR_limit %.2f dB",
                     ratio, thr, rows[0].aux["snr_limit_db"])
    if result.diverged_fraction > config.max_diverged_fraction:
        log.error("%d of %d trials diverged (limit %.0f%%)", result.diverged_trials,
                  result.total_trials, 100 * config.max_diverged_fraction)
        return EXIT_ANOMALY
    return EXIT_OK


def cmd_selftest(args):
    ok = oracles.run_selftest(seed=args.seed, n_tree=args.trees, n_mmse=args.mmse)
    return EXIT_OK if ok else EXIT_INVALID


def build_parser():
    p = _Parser(prog="csbsd", description="Sparse reconstruction via Bayesian support detection.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    g = sub.add_parser("gen-matrix", help="write a random sparse sensing graph")
    g.add_argument("--n", type=int, required=True)
    g.add_argument("--m", type=int, required=True)
    g.add_argument("--l", type=int, default=4)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_gen_matrix)

    g = sub.add_parser("gen-instance", help="draw a signal and its measurements for a graph")
    g.add_argument("--graph", required=True)
    g.add_argument("--q", type=float, default=0.05)
    g.add_argument("--sigma-x", type=float, default=10.0)
    g.add_argument("--n-d", type=int, default=64)
    noise = g.add_mutually_exclusive_group(required=True)
    noise.add_argument("--snr", type=float, help="target SNR in dB")
    noise.add_argument("--sigma-n", type=float)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out-z", required=True)
    g.add_argument("--out-truth")
    g.set_defaults(func=cmd_gen_instance)

    g = sub.add_parser("reconstruct", help="reconstruct one instance from files")
    g.add_argument("--graph", required=True)
    g.add_argument("--z", required=True)
    g.add_argument("--q", type=float, required=True)
    g.add_argument("--sigma-x", type=float, required=True)
    g.add_argument("--sigma-n", type=float, required=True)
    g.add_argument("--n-d", type=int, default=64)
    g.add_argument("--max-iters", type=int, default=10)
    g.add_argument("--epsilon", type=float)
    g.add_argument("--damping", type=float, default=0.0)
    g.add_argument("--conv-mode", choices=bp.CONV_MODES, default=bp.CIRCULAR)
    g.add_argument("--noise-model", choices=bp.NOISE_MODELS, default=bp.GRID)
    g.add_argument("--debug-dump", metavar="DIR")
    g.add_argument("--strict", action="store_true", help="exit 2 if BP produced degenerate messages")
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_reconstruct)

    g = sub.add_parser("experiment", help="run a Monte Carlo sweep and write rows CSV")
    g.add_argument("--kind", choices=harness.KINDS)
    g.add_argument("--config")
    g.add_argument("--n", type=int)
    g.add_argument("--m-over-n", dest="m_over_n")
    g.add_argument("--q", type=float)
    g.add_argument("--l", type=int)
    g.add_argument("--n-d", type=int)
    g.add_argument("--sigma-x", type=float)
    g.add_argument("--snr-grid", dest="snr_grid_db")
    g.add_argument("--trials", type=int)
    g.add_argument("--seed", type=int)
    g.add_argument("--output")
    g.add_argument("--conv-mode", choices=bp.CONV_MODES)
    g.add_argument("--noise-model", choices=bp.NOISE_MODELS)
    g.add_argument("--max-iters", type=int)
    g.add_argument("--epsilon")
    g.add_argument("--stopping", choices=harness.STOPPING)
    g.add_argument("--workers", type=int)
    g.add_argument("--max-diverged-fraction", type=float)
    g.set_defaults(func=cmd_experiment)

    g = sub.add_parser("selftest", help="run the brute-force oracle suites")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--trees", type=int, default=20)
    g.add_argument("--mmse", type=int, default=100)
    g.set_defaults(func=cmd_selftest)
    return p


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_INVALID
    except SystemExit as exc:   # --help
        return int(exc.code or 0)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:
        log.error("%s", exc)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
