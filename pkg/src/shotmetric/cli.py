"""Command-line interface: ``shotmetric {classify,sensitivity,verify,consistency}``.

Exit codes: 0 success, 1 usage error, 2 invalid input data, 3 numerical
failure (degenerate input or a failed property check).
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import frn, sensitivity, synth
from .episode import HEADS, REGULARIZERS, HeadConfig, load_episode
from .errors import FactorizationError, NumericalError, ValidationError
from .heads import classify

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _echo(config: dict) -> str:
    return "# config: " + json.dumps(config, sort_keys=True)


def _emit(text: str, out: str | None):
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


# ---------------------------------------------------------------------------
# classify


def cmd_classify(args) -> int:
    config = HeadConfig(
        head=args.head,
        temperature=args.sigma,
        frn_lambda=args.lam,
        frn_regularizer=args.regularizer,
    )
    episode = load_episode(args.episode)
    logits, pred = classify(episode, config)
    doc = {
        "config": {"episode": args.episode, **config.as_dict()},
        "class_ids": list(episode.class_ids),
        "predictions": [
            {
                "query": i,
                "predicted": label,
                "probabilities": pred.probabilities[i].tolist(),
                "logits": logits.scores[i].tolist(),
            }
            for i, label in enumerate(pred.labels)
        ],
    }
    _emit(json.dumps(doc, indent=2) + "\n", args.out)
    return EXIT_OK


# ---------------------------------------------------------------------------
# sensitivity


def _fmt_signed(x: float) -> str:
    return f"{x:+.2f}"


def cmd_sensitivity(args) -> int:
    paths = list(args.grids)
    pair = args.pair or []
    if not paths and not pair:
        raise ValidationError("no grid files given")
    out_dir = Path(args.out) if args.out else None
    if out_dir:
        out_dir.mkdir(parents=True, exist_ok=True)

    config = {"grids": paths, "pair": pair, "out": args.out}
    results = []
    lines = [_echo(config)]
    for p in paths + [q for q in pair if q not in paths]:
        grid = sensitivity.read_grid_csv(p)
        report = sensitivity.decompose(grid)
        results.append({"grid": p, "score": report.score, "row_means": report.row_means.tolist(),
                        "model_bias": report.model_bias.tolist(),
                        "heatmap": report.heatmap.tolist()})
        lines.append(f"{p}: score = {report.score:.2f}")
        if out_dir:
            sensitivity.write_report_csv(report, out_dir / f"{Path(p).stem}_report.csv")

    gains_doc = None
    if pair:
        euclid = sensitivity.read_grid_csv(pair[0])
        cosine = sensitivity.read_grid_csv(pair[1])
        gains = sensitivity.gain_table(euclid, cosine)
        gains_doc = {"test_shots": list(euclid.test_shots), "gains": gains.tolist()}
        lines.append(f"gain ({pair[1]} - {pair[0]}):")
        lines.extend(f"  test_shot {t}: {_fmt_signed(g)}" for t, g in zip(euclid.test_shots, gains))
        if out_dir:
            (out_dir / "gain.csv").write_text(
                sensitivity.format_gain_csv(gains, euclid.test_shots), encoding="utf-8"
            )

    if args.json:
        sys.stdout.write(json.dumps({"config": config, "reports": results, "gain": gains_doc},
                                    indent=2) + "\n")
    else:
        sys.stdout.write("\n".join(lines) + "\n")
    return EXIT_OK


# ---------------------------------------------------------------------------
# verify


def _branch_agreement(trials, seed):
    rng = np.random.default_rng([seed, 1])
    worst = 0.0
    for _ in range(trials):
        s, q, lam = frn.random_instance(rng, max_rows=40, max_dim=40)
        rho = frn.ridge_coefficient(s, lam)
        a = frn.ridge_weights(s, q, rho, branch="gram")
        b = frn.ridge_weights(s, q, rho, branch="covariance")
        worst = max(worst, frn.rel_error(a, b))
    return frn.PropertyResult("woodbury_branches", worst <= 1e-9, worst, 1e-9)


def _expansion_identity(trials, seed):
    rng = np.random.default_rng([seed, 2])
    worst = 0.0
    for _ in range(trials):
        s, q, lam = frn.random_instance(rng, max_rows=40, max_dim=40)
        cfg = HeadConfig(frn_lambda=lam)
        rec = frn.frn_reconstruct(s, q, cfg)
        direct = -float(np.sum((rec.reconstruction - q) ** 2))
        worst = max(worst, frn.rel_error(frn.frn_logit_full(s, q, cfg), direct))
    return frn.PropertyResult("expansion_identity", worst <= 1e-8, worst, 1e-8)


def run_verify(trials: int, seed: int, include_legacy: bool = False) -> dict:
    """Run the property suite; the legacy block never affects ``passed``."""
    if trials < 1:
        raise ValidationError("--trials must be >= 1")
    inv = frn.check_invariances(trials, seed, "frobenius")
    checks = [_branch_agreement(trials, seed), _expansion_identity(trials, seed), *inv.properties]
    doc = {
        "config": {"trials": trials, "seed": seed, "include_legacy": include_legacy},
        "frobenius": [_prop_dict(p) for p in checks],
        "passed": all(p.passed for p in checks),
    }
    if include_legacy:
        legacy = frn.check_invariances(trials, seed, "legacy")
        doc["legacy"] = [_prop_dict(p) for p in legacy.properties]
    return doc


def _prop_dict(p: frn.PropertyResult) -> dict:
    return {"name": p.name, "passed": p.passed, "worst": p.worst, "tolerance": p.tolerance}


def cmd_verify(args) -> int:
    doc = run_verify(args.trials, args.seed, args.regularizer == "legacy")
    if args.json:
        sys.stdout.write(json.dumps(doc, indent=2) + "\n")
    else:
        lines = [_echo(doc["config"]), "frobenius regularizer:"]
        for p in doc["frobenius"]:
            mark = "PASS" if p["passed"] else "FAIL"
            lines.append(f"  {mark}  {p['name']:<20} worst={p['worst']:.3e} tol={p['tolerance']:.0e}")
        if "legacy" in doc:
            lines.append("legacy regularizer (informational):")
            for p in doc["legacy"]:
                mark = "PASS" if p["passed"] else "FAIL"
                lines.append(f"  {mark}  {p['name']:<20} worst={p['worst']:.3e}")
        lines.append("all frobenius properties passed" if doc["passed"] else "property failure")
        sys.stdout.write("\n".join(lines) + "\n")
    return EXIT_OK if doc["passed"] else EXIT_NUMERIC


# ---------------------------------------------------------------------------
# consistency


def run_consistency(spec, shot, queries, trials, seed, sigma, workers=None) -> dict:
    rates = {}
    for head in ("proto_euclidean", "proto_cosine"):
        cfg = HeadConfig(head=head, temperature=sigma)
        rates[head] = synth.consistency_rate(spec, cfg, shot, queries, trials, seed, workers)
    return rates


def cmd_consistency(args) -> int:
    spec = synth.load_cluster_spec(args.spec)
    config = {
        "spec": args.spec,
        "shot": args.shot,
        "queries_per_class": args.queries,
        "trials": args.trials,
        "seed": args.seed,
        "sigma": args.sigma,
    }
    rates = run_consistency(spec, args.shot, args.queries, args.trials, args.seed, args.sigma)
    diff = rates["proto_cosine"] - rates["proto_euclidean"]
    if args.json:
        doc = {"config": config, "euclidean": rates["proto_euclidean"],
               "cosine": rates["proto_cosine"], "difference": diff}
        sys.stdout.write(json.dumps(doc, indent=2) + "\n")
    else:
        sys.stdout.write(
            "\n".join(
                [
                    _echo(config),
                    f"{'prediction':<12}{'agreement':>10}",
                    f"{'euclidean':<12}{rates['proto_euclidean']:>10.3f}",
                    f"{'cosine':<12}{rates['proto_cosine']:>10.3f}",
                    f"{'difference':<12}{diff:>+10.3f}",
                ]
            )
            + "\n"
        )
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="shotmetric", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("classify", help="classify the queries of an episode JSON file")
    p.add_argument("episode")
    p.add_argument("--head", choices=HEADS, default="proto_euclidean")
    p.add_argument("--sigma", type=float, default=1.0, help="temperature (default 1.0)")
    p.add_argument("--lambda", dest="lam", type=float, default=0.5,
                   help="FRN ridge weight (default 0.5)")
    p.add_argument("--regularizer", choices=REGULARIZERS, default="frobenius")
    p.add_argument("--out", help="write predictions JSON here instead of stdout")
    p.add_argument("--json", action="store_true", help="accepted for uniformity; output is JSON")
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("sensitivity", help="decompose accuracy grids into sensitivity heatmaps")
    p.add_argument("grids", nargs="*")
    p.add_argument("--pair", nargs=2, metavar=("EUCLID_CSV", "COSINE_CSV"))
    p.add_argument("--out", help="directory for report and gain CSVs")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_sensitivity)

    p = sub.add_parser("verify", help="run the reconstruction property suite")
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--regularizer", choices=("frobenius", "legacy"), default="frobenius",
                   help="'legacy' adds an informational legacy-regularizer block")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("consistency", help="support-resampling agreement for both proto heads")
    p.add_argument("spec", help="cluster spec JSON")
    p.add_argument("--shot", type=int, default=1)
    p.add_argument("--queries", type=int, default=15, help="queries per class (default 15)")
    p.add_argument("--trials", type=int, default=1000)
    p.add_argument("--seed", type=int, default=11)
    p.add_argument("--sigma", type=float, default=1.0)
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_consistency)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValidationError, OSError) as exc:
        print(f"shotmetric: error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (NumericalError, FactorizationError) as exc:
        print(f"shotmetric: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
