"""Command-line entry point.

Exit codes: 0 success, 2 config error, 3 infeasible density, 4 numerical
non-convergence.
"""

import argparse
import json
import sys
from pathlib import Path

from n2nskip import checkpoint
from n2nskip import connectivity as conn
from n2nskip.data import gen_blobs, save_csv
from n2nskip.errors import (
    ConfigError,
    ConvergenceError,
    IncomparableError,
    InfeasibleDensityError,
)
from n2nskip.experiment import (
    AnalysisConfig,
    ExperimentConfig,
    analyze_network,
    compare,
    dump_json,
    load_report,
    run_experiment,
    with_overrides,
)

EXIT_CONFIG = 2
EXIT_INFEASIBLE = 3
EXIT_NUMERIC = 4


def _parse_value(text):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def parse_overrides(tokens):
    """Turn ``--a.b value`` / ``--a.b=value`` tokens into a dotted-key dict."""
    out = {}
    i = 0
    while i < len(tokens):
        tok = tokens[i]
        if not tok.startswith("--"):
            raise ConfigError(f"unexpected argument {tok!r}")
        key = tok[2:]
        if "=" in key:
            key, raw = key.split("=", 1)
        else:
            if i + 1 >= len(tokens):
                raise ConfigError(f"override --{key} needs a value")
            raw = tokens[i + 1]
            i += 1
        out[key.replace("-", "_")] = _parse_value(raw)
        i += 1
    return out


def load_config(path, overrides):
    doc = {}
    if path:
        try:
            doc = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
    return ExperimentConfig.from_dict(with_overrides(doc, overrides))


def _write(text, out):
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def cmd_gen_data(args, extra):
    data = gen_blobs(args.classes, args.dim, args.per_class, args.spread, args.seed)
    save_csv(data, args.out)
    print(f"wrote {data.n_train} train + {data.n_test} test rows to {args.out}")


def _log(msg):
    print(msg, file=sys.stderr)


def _summary(report):
    for key, agg in sorted(report.aggregates().items()):
        print(
            f"{key}: test_acc {agg['test_acc_mean']:.4f} +/- {agg['test_acc_std']:.4f} "
            f"(mean +/- sample std, {agg['n_seeds']} seeds), F {agg['F_mean']:.4g}"
        )
    if report.out_dir:
        print(f"manifest: {Path(report.out_dir) / 'manifest.json'}")


def cmd_train(args, extra):
    cfg = load_config(args.config, parse_overrides(extra))
    if cfg.methods or cfg.densities:
        cfg = ExperimentConfig.from_dict({**cfg.to_dict(), "methods": None, "densities": None})
    _summary(run_experiment(cfg, out=args.out, log=_log))


def cmd_sweep(args, extra):
    cfg = load_config(args.config, parse_overrides(extra))
    if not cfg.methods:
        raise ConfigError("sweep needs a 'methods' list in the config")
    _summary(run_experiment(cfg, out=args.out, log=_log))


def _analysis(args):
    return AnalysisConfig(
        t=args.t,
        K=args.K,
        K_percent=args.K_percent,
        threshold=args.threshold,
        weighted=not args.binary,
    )


def cmd_analyze(args, extra):
    an_cfg = _analysis(args)
    net = checkpoint.load(args.checkpoint)
    an = analyze_network(net, an_cfg)
    doc = {
        "checkpoint": str(args.checkpoint),
        "n": an.spectrum.n,
        "t": an_cfg.t,
        "K": an.K,
        "threshold": an_cfg.threshold,
        "weighted": an_cfg.weighted,
        "components": an.components,
        "lambda_2": float(an.spectrum.eigenvalues[1]) if an.spectrum.n > 1 else 0.0,
        "saturation_time": an.saturation if an.saturation != float("inf") else None,
        "signature": [float(v) for v in an.signature.values],
    }
    if args.reference:
        ref = analyze_network(checkpoint.load(args.reference), an_cfg)
        doc["reference"] = str(args.reference)
        doc["F"] = conn.signature_distance(ref.signature, an.signature)
    _write(dump_json(doc), args.out)


def cmd_scree(args, extra):
    net = checkpoint.load(args.checkpoint)
    W = conn.to_adjacency(net, weighted=not args.binary)
    spec = conn.eig_sym(conn.graph_laplacian(W))
    K = args.K if args.K is not None else conn.k_from_percent(args.K_percent, spec.n)
    grid = conn.default_t_grid(args.t_max, args.steps)
    _write(conn.scree_csv(conn.scree_curve(spec, K, grid)), args.out)


def cmd_compare(args, extra):
    a, b = load_report(args.report_a), load_report(args.report_b)
    summary = compare(a, b, (args.a_method, args.a_density), (args.b_method, args.b_density))
    _write(dump_json(summary.to_dict()), args.out)


def cmd_export_adjacency(args, extra):
    net = checkpoint.load(args.checkpoint)
    W = conn.to_adjacency(net, weighted=not args.binary)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            conn.write_edge_list(W, fh)
    else:
        conn.write_edge_list(W, sys.stdout)


def _add_analysis_flags(p):
    p.add_argument("--t", type=float, default=conn.DEFAULT_T, help="diffusion time")
    p.add_argument("--K", type=int, default=None, help="eigenvalue count for the scree curve")
    p.add_argument("--K-percent", type=float, default=0.5, help="used when --K is not given")
    p.add_argument("--threshold", type=float, default=conn.DEFAULT_THRESHOLD)
    p.add_argument("--binary", action="store_true", help="unweighted adjacency")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="n2nskip", description=__doc__.splitlines()[0], allow_abbrev=False
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="write a Gaussian-blob dataset as CSV")
    p.add_argument("--classes", type=int, default=4)
    p.add_argument("--dim", type=int, default=100)
    p.add_argument("--per-class", type=int, default=250)
    p.add_argument("--spread", type=float, default=0.35)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen_data)

    for name, func, text in (
        ("train", cmd_train, "run one method/density over the configured seeds"),
        ("sweep", cmd_sweep, "run methods x densities x seeds"),
    ):
        p = sub.add_parser(
            name,
            help=text,
            allow_abbrev=False,
            description=text + ". Extra --section.key VALUE flags override config keys.",
        )
        p.add_argument("--config", help="JSON experiment config")
        p.add_argument("--out", help="output root (default $N2NSKIP_OUT or ./out)")
        p.set_defaults(func=func)

    p = sub.add_parser("analyze", help="connectivity report for a checkpoint")
    p.add_argument("checkpoint")
    p.add_argument("--reference", help="reference checkpoint for the signature distance")
    p.add_argument("--out")
    _add_analysis_flags(p)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("scree", help="scree curve CSV for a checkpoint")
    p.add_argument("checkpoint")
    p.add_argument("--out")
    p.add_argument("--t-max", type=float, default=1000.0)
    p.add_argument("--steps", type=int, default=241)
    _add_analysis_flags(p)
    p.set_defaults(func=cmd_scree)

    p = sub.add_parser("compare", help="paired per-seed comparison of two experiments")
    p.add_argument("report_a")
    p.add_argument("report_b")
    p.add_argument("--a-method")
    p.add_argument("--a-density", type=float)
    p.add_argument("--b-method")
    p.add_argument("--b-density", type=float)
    p.add_argument("--out")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("export-adjacency", help="edge list of a checkpoint's graph")
    p.add_argument("checkpoint")
    p.add_argument("--binary", action="store_true")
    p.add_argument("--out")
    p.set_defaults(func=cmd_export_adjacency)
    return parser


def main(argv=None):
    parser = build_parser()
    args, extra = parser.parse_known_args(argv)
    if extra and args.command not in ("train", "sweep"):
        parser.error(f"unrecognized arguments: {' '.join(extra)}")
    try:
        args.func(args, extra)
    except (ConfigError, IncomparableError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except InfeasibleDensityError as exc:
        print(f"infeasible density: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except ConvergenceError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return 0


if __name__ == "__main__":
    sys.exit(main())
