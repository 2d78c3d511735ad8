"""Command-line front end.

Subcommands wire the pipeline together: ``simtab`` (feed -> similarity
table), ``gen`` (random scenario), ``optimize`` (scenario -> assignment),
``evaluate`` (diversity metric), ``simulate`` (propagation MTTC) and
``bench`` (experiment families). Machine outputs go to files; human
summaries go to standard error. Every command is deterministic for fixed
flags and seed (wall-time fields excepted), all randomness derives from the
single ``--seed``, and ``--threads N`` (or DIVNET_THREADS) never changes
results, only speed.

Exit codes: 0 success, 1 validation/usage, 2 strict non-convergence,
3 I/O failure.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from pathlib import Path

from .bayes import ExploitKit, build_bn, diversity_metric, infer
from .errors import DivnetError
from .harness import (
    Budgets,
    GenSpec,
    gen_network,
    report_as_json,
    run_experiment,
    write_report_csv,
)
from .mrf import PARALLEL_CHAIN, SEQUENTIAL, SolverConfig, build_problem, solve_trws
from .scenario import (
    Scenario,
    load_assignment,
    load_scenario,
    save_assignment,
    save_scenario,
)
from .seeding import derive_seed
from .sim import GREEDY, UNIFORM, SimScenario, mttc
from .similarity import ProductId, build_table, ingest_feed, save_table

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_NOT_CONVERGED = 2
EXIT_IO = 3


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


def _say(*parts):
    print(*parts, file=sys.stderr)


def _write_json(path, obj):
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _maybe_nan(x):
    return None if isinstance(x, float) and math.isnan(x) else x


def _int_list(text):
    return [int(x) for x in text.split(",") if x != ""]


def _float_list(text):
    return [float(x) for x in text.split(",") if x != ""]


def _parse_entry(text):
    if ":" in text:
        host, _, prior = text.rpartition(":")
        return host, float(prior)
    return text, 1.0


def _default_threads():
    env = os.environ.get("DIVNET_THREADS")
    return int(env) if env else 1


def _add_common(p):
    p.add_argument("--seed", type=int, default=42, help="master seed (default 42)")
    p.add_argument("--threads", type=int, default=_default_threads(),
                   help="worker cap; results do not depend on it")


# -- subcommands -----------------------------------------------------------------


def _cmd_simtab(args) -> int:
    products = [ProductId(args.service, c) for c in args.products.split(",") if c.strip()]
    with open(args.feed, "rb") as fh:
        catalog = ingest_feed(
            fh, products, fmt=None if args.format == "auto" else args.format,
            exact=args.exact, source_meta=args.meta,
        )
    table = build_table(catalog, args.service, products)
    save_table(table, args.out)
    n = len(products)
    _say(f"simtab: {n} products, {n * (n - 1) // 2} pairs -> {args.out}")
    return EXIT_OK


def _cmd_gen(args) -> int:
    spec = GenSpec(
        hosts=args.hosts, degree=args.degree, services=args.services,
        products=args.products, sim_lo=args.sim_lo, sim_hi=args.sim_hi, seed=args.seed,
    )
    network, tables = gen_network(spec)
    save_scenario(Scenario(network, tables), args.out)
    _say(f"gen: {len(network.hosts)} hosts, {len(network.links)} links -> {args.out}")
    return EXIT_OK


def _cmd_optimize(args) -> int:
    scenario = load_scenario(args.scenario, strict=args.strict)
    config = SolverConfig(
        max_iterations=args.max_iters, tolerance=args.tol, seed=args.seed,
        schedule=args.schedule,
    )
    problem = build_problem(
        scenario.network, scenario.tables, constraints=scenario.constraints,
        clamps=scenario.clamps, config=config,
    )
    result = solve_trws(problem, config, threads=args.threads)
    save_assignment(result.labeling, args.out)
    report = {
        "energy": result.energy,
        "lower_bound": result.lower_bound,
        "gap": result.gap,
        "iterations": result.iterations,
        "converged": result.converged,
        "wall_ms": round(result.wall_ms, 3),
    }
    if args.report:
        _write_json(args.report, report)
    _say(
        f"optimize: energy {result.energy:.6g}, bound {result.lower_bound:.6g}, "
        f"gap {result.gap:.3g}, {result.iterations} iterations, "
        f"{'converged' if result.converged else 'not converged'}"
    )
    if args.strict and not result.converged:
        return EXIT_NOT_CONVERGED
    return EXIT_OK


def _kit_for(args, scenario):
    if args.kit:
        return ExploitKit(tuple(args.kit.split(",")))
    return ExploitKit(tuple(scenario.network.services))


def _cmd_evaluate(args) -> int:
    scenario = load_scenario(args.scenario, strict=args.strict)
    assignment = load_assignment(args.assignment, scenario.network)
    roots = [_parse_entry(e) for e in args.entry]
    bn = build_bn(
        scenario.network, assignment, roots, args.target, _kit_for(args, scenario),
        p_avg=args.p_avg, tables=scenario.tables_by_service(),
    )
    result = infer(
        bn, method=args.method, samples=args.samples,
        seed=derive_seed(args.seed, "evaluate"), threads=args.threads,
    )
    p = result.p[args.target]
    p_prime = result.p_prime[args.target]
    d_bn = diversity_metric(result, args.target)
    report = {
        "target": args.target,
        "method": result.method,
        "samples": result.samples,
        "p_marginal": p,
        "p_prime_marginal": p_prime,
        "log10_p": math.log10(p),
        "log10_p_prime": math.log10(p_prime) if p_prime > 0 else None,
        "d_bn": d_bn,
        "dropped_edges": [list(e) for e in bn.dropped_edges],
    }
    _write_json(args.out, report)
    _say(
        f"evaluate: log10 P' {report['log10_p_prime']:.4g}, log10 P {report['log10_p']:.4g}, "
        f"d_bn {d_bn:.5g} -> {args.out}"
    )
    return EXIT_OK


def _cmd_simulate(args) -> int:
    scenario = load_scenario(args.scenario, strict=args.strict)
    assignment = load_assignment(args.assignment, scenario.network)
    policy = {"greedy": GREEDY, "uniform": UNIFORM}[args.policy]
    sim_scenario = SimScenario(
        network=scenario.network,
        assignment=assignment,
        tables=scenario.tables_by_service(),
        entry=args.entry,
        target=args.target,
        kit=_kit_for(args, scenario),
        p_avg=args.p_avg,
        policy=policy,
        max_ticks=args.max_ticks,
        runs=args.runs,
    )
    report = mttc(sim_scenario, master_seed=derive_seed(args.seed, "simulate"),
                  threads=args.threads)
    _write_json(
        args.out,
        {
            "mttc_mean": report.mttc_mean,
            "mttc_std": report.mttc_std,
            "success_count": report.success_count,
            "censored_count": report.censored_count,
            "ticks": list(report.ticks),
            "seed": report.seed,
        },
    )
    if args.trace:
        from .sim import edge_rates, run_once
        from .seeding import derive_seed as derive
        rates = edge_rates(
            scenario.network, assignment, scenario.tables_by_service(),
            sim_scenario.kit, args.p_avg,
        )
        with open(args.trace, "w", encoding="utf-8") as fh:
            fh.write("run,tick,host\n")
            for run in range(args.runs):
                _, trace = run_once(sim_scenario, derive(report.seed, "run", run), rates)
                for tick, host in trace:
                    fh.write(f"{run},{tick},{host}\n")
    mean = "censored" if report.mttc_mean is None else f"{report.mttc_mean:.3f}"
    _say(
        f"simulate: mttc {mean} ticks over {report.success_count} successes "
        f"({report.censored_count} censored) -> {args.out}"
    )
    return EXIT_OK


def _cmd_bench(args) -> int:
    base = GenSpec(
        hosts=args.hosts[0], degree=args.degree[0], services=args.services[0],
        products=args.products[0], sim_lo=args.sim_lo, sim_hi=args.sim_hi, seed=args.seed,
    )
    if args.family == "variety":
        sweep = args.products
    elif args.family == "constraints":
        sweep = args.constraints
    elif args.family == "structure":
        sweep = args.extra_edges
    else:
        sweep = [
            (h, d, s) for h in args.hosts for d in args.degree for s in args.services
        ]
    budgets = Budgets(
        time_s=args.time_budget,
        samples=args.samples,
        solver=SolverConfig(max_iterations=args.max_iters, tolerance=args.tol, seed=args.seed),
        threads=args.threads,
        p_avg=args.p_avg,
    )
    report = run_experiment(args.family, base, sweep, budgets, replicates=args.replicates)
    write_report_csv(report, args.out)
    if args.json:
        _write_json(args.json, report_as_json(report))
    _say(
        f"bench {args.family}: {len(report.rows)} rows"
        + (" (partial: budget exceeded)" if report.partial else "")
        + f" -> {args.out}"
    )
    return EXIT_OK


# -- parser ------------------------------------------------------------------------


def build_parser() -> _Parser:
    parser = _Parser(prog="divnet", description=__doc__,
                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simtab", help="build a similarity table from a vulnerability feed")
    p.add_argument("--feed", required=True, help="feed file (plain CVE map or NVD JSON)")
    p.add_argument("--products", required=True, help="comma-separated CPE filters")
    p.add_argument("--service", required=True, help="service category of the products")
    p.add_argument("--out", required=True, help="output table CSV")
    p.add_argument("--format", choices=["auto", "plain", "nvd"], default="auto")
    p.add_argument("--exact", action="store_true", help="exact CPE matching (no prefix)")
    p.add_argument("--meta", default="", help="provenance note stored with the catalog")
    _add_common(p)
    p.set_defaults(fn=_cmd_simtab)

    p = sub.add_parser("gen", help="generate a random scenario")
    p.add_argument("--hosts", type=int, required=True)
    p.add_argument("--degree", type=float, required=True, help="average degree (edges per host)")
    p.add_argument("--services", type=int, default=3)
    p.add_argument("--products", type=int, default=3)
    p.add_argument("--sim-lo", type=float, default=0.05)
    p.add_argument("--sim-hi", type=float, default=0.95)
    p.add_argument("--out", required=True, help="output scenario JSON")
    _add_common(p)
    p.set_defaults(fn=_cmd_gen)

    p = sub.add_parser("optimize", help="compute the most diverse assignment")
    p.add_argument("--scenario", required=True)
    p.add_argument("--out", required=True, help="output assignment JSON")
    p.add_argument("--report", default=None, help="sidecar solve report JSON")
    p.add_argument("--max-iters", type=int, default=2000)
    p.add_argument("--tol", type=float, default=1e-6)
    p.add_argument("--schedule", choices=[SEQUENTIAL, PARALLEL_CHAIN], default=SEQUENTIAL)
    p.add_argument("--strict", action="store_true",
                   help="nonzero exit on non-convergence; reject unknown scenario keys")
    _add_common(p)
    p.set_defaults(fn=_cmd_optimize)

    p = sub.add_parser("evaluate", help="diversity metric of an assignment")
    p.add_argument("--scenario", required=True)
    p.add_argument("--assignment", required=True)
    p.add_argument("--entry", action="append", required=True,
                   help="entry host, optionally host:prior (repeatable)")
    p.add_argument("--target", required=True)
    p.add_argument("--method", choices=["exact", "sample"], default="exact")
    p.add_argument("--samples", type=int, default=1_000_000)
    p.add_argument("--p-avg", type=float, default=0.08)
    p.add_argument("--kit", default=None, help="comma-separated kit services (default: all)")
    p.add_argument("--out", required=True, help="output evaluation report JSON")
    p.add_argument("--strict", action="store_true")
    _add_common(p)
    p.set_defaults(fn=_cmd_evaluate)

    p = sub.add_parser("simulate", help="malware-propagation MTTC")
    p.add_argument("--scenario", required=True)
    p.add_argument("--assignment", required=True)
    p.add_argument("--entry", required=True)
    p.add_argument("--target", required=True)
    p.add_argument("--runs", type=int, default=1000)
    p.add_argument("--max-ticks", type=int, default=10_000)
    p.add_argument("--policy", choices=["greedy", "uniform"], default="greedy")
    p.add_argument("--p-avg", type=float, default=0.08)
    p.add_argument("--kit", default=None)
    p.add_argument("--out", required=True, help="output simulation report JSON")
    p.add_argument("--trace", default=None, help="optional per-run infection trace CSV")
    p.add_argument("--strict", action="store_true")
    _add_common(p)
    p.set_defaults(fn=_cmd_simulate)

    p = sub.add_parser("bench", help="run an experiment family")
    p.add_argument("family", choices=["structure", "variety", "constraints", "scale"])
    p.add_argument("--hosts", type=_int_list, default=[30])
    p.add_argument("--degree", type=_float_list, default=[3.0])
    p.add_argument("--services", type=_int_list, default=[3])
    p.add_argument("--products", type=_int_list, default=[3])
    p.add_argument("--constraints", type=_int_list, default=[0, 5, 10, 15])
    p.add_argument("--extra-edges", type=_int_list, default=[0, 10, 20])
    p.add_argument("--replicates", type=int, default=1)
    p.add_argument("--samples", type=int, default=400_000)
    p.add_argument("--sim-lo", type=float, default=0.05)
    p.add_argument("--sim-hi", type=float, default=0.95)
    p.add_argument("--p-avg", type=float, default=0.08)
    p.add_argument("--max-iters", type=int, default=2000)
    p.add_argument("--tol", type=float, default=1e-6)
    p.add_argument("--time-budget", type=float, default=None, help="wall-clock budget (s)")
    p.add_argument("--out", required=True, help="output report CSV")
    p.add_argument("--json", default=None, help="optional JSON mirror")
    _add_common(p)
    p.set_defaults(fn=_cmd_bench)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.fn(args)
    except _UsageError as exc:
        _say(f"usage error: {exc}")
        parser.print_usage(sys.stderr)
        return EXIT_VALIDATION
    except DivnetError as exc:
        _say(f"error: {exc}")
        return EXIT_VALIDATION
    except OSError as exc:
        _say(f"i/o error: {exc}")
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
