"""Command-line front end and JSON reports.

Exit codes: 0 ran and wrote its output, 2 usage error, 3 data or validation
error, 4 I/O failure while writing output.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import sys
import time
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .engine import TestConfig, TestReport, run_test
from .errors import RatexpError, ValidationError
from .montecarlo import DECIDERS, KINDS, DgpSpec, power_curve, tuning_sweep
from .oracle import (ZETA_SD, DiscreteDist, check_mps, construct_martingale_coupling,
                     population_threshold_covariate_design, population_threshold_no_covariates,
                     population_threshold_two_point_bias)
from .sample_io import DEFAULT_SCHEMA, PooledSample, load_pooled_sample, winsorize_upper
from .variants import (SHOCK_KINDS, LinkedSample, combined_test, direct_test, naive_mean_test,
                       test_with_rounding, test_with_selection, test_with_shocks, variance_test)

SCHEMA_VERSION = 1
EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_IO = 0, 2, 3, 4


class UsageError(Exception):
    pass


class OutputError(Exception):
    pass


@dataclass
class RunManifest:
    subcommand: str
    argv: list
    inputs: dict
    config: dict
    variant: str
    schema: dict
    output: str | None
    tool_version: str = __version__
    rng: dict = field(default_factory=dict)
    timestamp: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)


def _file_digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 16), b""):
            h.update(block)
    return h.hexdigest()


def _jsonable(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, Path):
        return str(obj)
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def dumps(doc) -> str:
    # repr-based float formatting keeps full precision
    return json.dumps(doc, indent=2, default=_jsonable) + "\n"


def write_report(report, manifest: RunManifest, path=None, emit_draws: bool = False) -> str:
    """Write one JSON document holding the manifest and the report.

    ``report`` is a ``TestReport`` or an already serializable dict. With
    ``path=None`` the document goes to stdout.
    """
    body = report.to_dict(emit_draws) if isinstance(report, TestReport) else report
    text = dumps({"schema_version": SCHEMA_VERSION, "manifest": manifest.to_dict(), "report": body})
    if path is None:
        sys.stdout.write(text)
        return text
    try:
        Path(path).write_text(text, encoding="utf-8")
    except OSError as exc:
        raise OutputError(f"cannot write {path}: {exc}") from exc
    return text


def read_report(path) -> dict:
    return json.loads(Path(path).read_text(encoding="utf-8"))


# ---------------------------------------------------------------------------
# argument parsing


def _float_list(text: str) -> list[float]:
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _rmax(text: str):
    if text == "auto":
        return text
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError("--rmax takes 'auto' or a nonnegative integer") from None
    if v < 0:
        raise argparse.ArgumentTypeError("--rmax must be nonnegative")
    return v


def _schema_pair(text: str) -> tuple[str, str]:
    key, sep, col = text.partition("=")
    if not sep or key not in DEFAULT_SCHEMA:
        raise argparse.ArgumentTypeError(f"--schema takes FIELD=COLUMN with FIELD in {sorted(DEFAULT_SCHEMA)}")
    return key, col


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _add_tuning(p: argparse.ArgumentParser) -> None:
    d = TestConfig()
    g = p.add_argument_group("test settings")
    g.add_argument("--alpha", type=float, default=d.alpha)
    g.add_argument("--boot", type=int, default=d.n_boot, help="bootstrap replications B")
    g.add_argument("--seed", type=int, default=d.seed)
    g.add_argument("--b0", type=float, default=d.b0)
    g.add_argument("--kappa", type=float, default=d.kappa)
    g.add_argument("--p", type=float, default=d.p, help="weight on the equality moment")
    g.add_argument("--epsilon", type=float, default=d.epsilon)
    g.add_argument("--eta", type=float, default=d.eta)
    g.add_argument("--grid", type=int, default=d.grid_len, help="number of y grid points")
    g.add_argument("--rmax", type=_rmax, default=d.r_max)
    g.add_argument("--threads", type=int, default=None,
                   help="worker threads (RE_TEST_THREADS caps this); results do not depend on it")


def _add_data(p: argparse.ArgumentParser) -> None:
    p.add_argument("data", help="pooled CSV (one row per observation)")
    p.add_argument("--schema", type=_schema_pair, action="append", default=[],
                   metavar="FIELD=COLUMN", help="rename an input column, e.g. value=expected_income")
    p.add_argument("--weights-col", help="survey weight column")
    p.add_argument("--use-weights", action="store_true",
                   help="also weight the bootstrap moments (default: weights enter c_hat and classic tests only)")
    p.add_argument("--winsorize", type=float, metavar="Q", help="cap each subsample at its Q-quantile")
    p.add_argument("--group-col", help="run once per value of this column")


def build_parser() -> argparse.ArgumentParser:
    root = _Parser(prog="ratexp", description="Tests of rational expectations from belief and outcome samples.")
    root.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    root.add_argument("--error-format", choices=("json", "text"), default="json")
    sub = root.add_subparsers(dest="command", required=True, parser_class=_Parser)

    t = sub.add_parser("test", help="bootstrap test of the spread restrictions")
    _add_data(t)
    _add_tuning(t)
    t.add_argument("--covariates", action="store_true", help="condition on the x columns")
    t.add_argument("--shock", choices=("none",) + SHOCK_KINDS, default="none")
    t.add_argument("--rounding", action="store_true", help="beliefs are reported as [psi_lo, psi_hi]")
    t.add_argument("--propensity-col", help="selection test with this propensity column")
    t.add_argument("--selection", action="store_true",
                   help="selection test with a logit propensity fitted on the covariates")
    t.add_argument("--linked", help="CSV of jointly observed pairs (columns y, psi[, w])")
    t.add_argument("--lambda-lower", type=float, help="lower bound on the belief signal-to-noise ratio")
    t.add_argument("--out", help="report path (default stdout)")
    t.add_argument("--emit-draws", action="store_true", help="include the bootstrap draws")
    t.add_argument("--tsv", help="also write one summary row per group to this TSV")

    c = sub.add_parser("classic", help="mean, variance and regression benchmarks")
    c.add_argument("which", choices=("naive", "variance", "direct"))
    c.add_argument("data", help="pooled CSV, or linked pairs for 'direct'")
    c.add_argument("--schema", type=_schema_pair, action="append", default=[], metavar="FIELD=COLUMN")
    c.add_argument("--weights-col")
    c.add_argument("--winsorize", type=float, metavar="Q")
    c.add_argument("--shock", choices=("none",) + SHOCK_KINDS, default="none")
    c.add_argument("--out")

    m = sub.add_parser("mc", help="Monte Carlo experiments")
    msub = m.add_subparsers(dest="mc_command", required=True, parser_class=_Parser)
    pc = msub.add_parser("power-curve")
    ts = msub.add_parser("tuning-sweep")
    for q in (pc, ts):
        q.add_argument("--kind", choices=KINDS, default="no_covariates")
        q.add_argument("--test", choices=sorted(DECIDERS), default="full")
        q.add_argument("--n", type=int, default=800)
        q.add_argument("--reps", type=int, default=100)
        q.add_argument("--zeta-sd", type=float, default=ZETA_SD)
        q.add_argument("--out", help="CSV path for the table")
        _add_tuning(q)
    pc.add_argument("--rho", type=_float_list, default=[0.3, 0.45, 0.6, 0.7, 0.85, 1.0])
    ts.add_argument("--b0-grid", type=_float_list, default=[0.1, 0.3, 1.0])
    ts.add_argument("--kappa-grid", type=_float_list, default=[0.001, 0.01, 0.1])
    ts.add_argument("--null-rho", type=float, default=1.0)
    ts.add_argument("--alt-rho", type=float, default=0.45)
    ts.add_argument("--size-slack", type=float, default=0.0)

    o = sub.add_parser("oracle", help="population-level checks")
    osub = o.add_subparsers(dest="oracle_command", required=True, parser_class=_Parser)
    for name in ("check-mps", "coupling"):
        q = osub.add_parser(name)
        q.add_argument("--outcome", required=True, help="CSV with columns support, mass")
        q.add_argument("--belief", required=True, help="CSV with columns support, mass")
        q.add_argument("--tol", type=float, default=1e-7)
        q.add_argument("--out")
    th = osub.add_parser("thresholds")
    th.add_argument("--zeta-sd", type=float, default=ZETA_SD)
    th.add_argument("--method", choices=("exact", "trapezoid"), default="exact")
    th.add_argument("--no-covariate-design", action="store_true", help="skip the Beta-covariate design")
    th.add_argument("--out")
    return root


# ---------------------------------------------------------------------------
# helpers


def _schema(args) -> dict:
    schema = dict(args.schema)
    if getattr(args, "weights_col", None):
        schema["weight"] = args.weights_col
    return schema


def read_column(path, column: str) -> list[str]:
    with Path(path).open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if column not in (reader.fieldnames or []):
            from .errors import SchemaError
            raise SchemaError(f"missing column {column!r}")
        return [rec[column] for rec in reader]


def _load(args) -> PooledSample:
    sample = load_pooled_sample(args.data, _schema(args))
    if args.winsorize is not None:
        sample = winsorize_upper(sample, args.winsorize)
    return sample


def _config(args, use_weights: bool = False) -> TestConfig:
    return TestConfig(alpha=args.alpha, b0=args.b0, kappa=args.kappa, p=args.p, epsilon=args.epsilon,
                      eta=args.eta, grid_len=args.grid, n_boot=args.boot, r_max=args.rmax,
                      seed=args.seed, use_weights=use_weights, threads=args.threads)


def _variant(args) -> str:
    picks = [name for name, on in (("rounding", args.rounding),
                                   ("selection", args.propensity_col or args.selection),
                                   ("combined", args.linked is not None)) if on]
    if (args.linked is None) != (args.lambda_lower is None):
        raise UsageError("--linked and --lambda-lower go together")
    if len(picks) > 1:
        raise UsageError(f"choose at most one of {picks}")
    if picks and picks[0] != "combined" and args.shock != "none":
        raise UsageError(f"--shock does not combine with the {picks[0]} test")
    if picks:
        return picks[0]
    return "full" if args.shock == "none" else "shock"


def _run_one(sample: PooledSample, args, cfg: TestConfig, variant: str, propensity=None,
             linked=None) -> TestReport:
    if variant == "full":
        return run_test(sample, cfg)
    if variant == "shock":
        return test_with_shocks(sample, cfg, args.shock)
    if variant == "rounding":
        return test_with_rounding(sample, cfg)
    if variant == "selection":
        return test_with_selection(sample, propensity, cfg)
    return combined_test(sample, linked, args.lambda_lower, cfg, args.shock)


def _propensity(args, n: int):
    if not args.propensity_col:
        return None
    vals = read_column(args.data, args.propensity_col)
    try:
        p = np.array([float(v) for v in vals])
    except ValueError as exc:
        raise ValidationError(f"propensity column: {exc}") from None
    if p.size != n:
        raise ValidationError("propensity column length does not match the sample")
    return p


def _summary_row(group, sample: PooledSample, report: TestReport, shock: str) -> dict:
    naive = naive_mean_test(sample)
    var = variance_test(sample, shock)
    return {"group": group, "mean_gap": naive.estimate, "naive_p": naive.p_value,
            "variance_p": var.p_value, "full_p": report.p_value,
            "n_psi": sample.n0, "n_y": sample.n1}


def _write_tsv(rows: list[dict], path) -> None:
    try:
        with Path(path).open("w", newline="", encoding="utf-8") as fh:
            wr = csv.writer(fh, delimiter="\t", lineterminator="\n")
            wr.writerow(["group", "mean_gap", "naive_p", "variance_p", "full_p", "n_psi", "n_y"])
            for r in rows:
                wr.writerow([r["group"]] + [repr(float(r[k])) for k in ("mean_gap", "naive_p",
                                                                       "variance_p", "full_p")]
                            + [r["n_psi"], r["n_y"]])
    except OSError as exc:
        raise OutputError(f"cannot write {path}: {exc}") from exc


def _manifest(args, argv, inputs: dict, config: dict, variant: str, schema: dict, output) -> RunManifest:
    digests = {k: {"path": str(v), "sha256": _file_digest(v)} for k, v in inputs.items() if v}
    return RunManifest(
        subcommand=args.command if not hasattr(args, "mc_command") else f"mc {args.mc_command}",
        argv=list(argv), inputs=digests, config=config, variant=variant, schema=schema,
        output=output,
        rng={} if "seed" not in config else {
            "bit_generator": "PCG64", "seed": config["seed"],
            "replicate_stream": "SeedSequence(seed, spawn_key=(b, stream))"},
    )


def _stamp(manifest: RunManifest, started: float) -> None:
    manifest.timestamp = {
        "started_utc": datetime.fromtimestamp(started, timezone.utc).isoformat(),
        "elapsed_seconds": round(time.time() - started, 3),
    }


# ---------------------------------------------------------------------------
# subcommands


def cmd_test(args, argv) -> int:
    started = time.time()
    variant = _variant(args)
    if args.tsv and not args.group_col:
        raise UsageError("--tsv needs --group-col")
    cfg = _config(args, use_weights=args.use_weights)
    if not args.covariates:
        cfg = TestConfig(**{**cfg.to_dict(), "r_max": 0, "threads": cfg.threads})
    sample = _load(args)
    propensity = _propensity(args, sample.n)
    linked = LinkedSample.from_csv(args.linked) if args.linked else None
    if variant == "selection" and propensity is None and sample.d_x == 0:
        raise ValidationError("a fitted propensity needs covariate columns")
    manifest = _manifest(args, argv, {"data": args.data, "linked": args.linked}, cfg.to_dict(),
                         variant if args.shock == "none" else f"{variant}:{args.shock}",
                         _schema(args), args.out)

    if not args.group_col:
        report = _run_one(sample, args, cfg, variant, propensity, linked)
        _stamp(manifest, started)
        write_report(report, manifest, args.out, args.emit_draws)
        return EXIT_OK

    labels = np.array(read_column(args.data, args.group_col), dtype=object)
    groups, rows = [], []
    for g in sorted(set(labels)):
        mask = labels == g
        sub = sample.subset(mask)
        p = None if propensity is None else propensity[mask]
        report = _run_one(sub, args, cfg, variant, p, linked)
        body = report.to_dict(args.emit_draws)
        body["group"] = g
        groups.append(body)
        rows.append(_summary_row(g, sub, report, args.shock))
    _stamp(manifest, started)
    write_report({"groups": groups}, manifest, args.out)
    if args.tsv:
        _write_tsv(rows, args.tsv)
    return EXIT_OK


def cmd_classic(args, argv) -> int:
    started = time.time()
    if args.which == "direct":
        linked = LinkedSample.from_csv(args.data)
        r = direct_test(linked)
        body = asdict(r)
    else:
        sample = load_pooled_sample(args.data, _schema(args))
        if args.winsorize is not None:
            sample = winsorize_upper(sample, args.winsorize)
        r = naive_mean_test(sample) if args.which == "naive" else variance_test(sample, args.shock)
        body = asdict(r)
        body.update(n_y=sample.n1, n_psi=sample.n0)
    manifest = _manifest(args, argv, {"data": args.data}, {"shock": args.shock}, args.which,
                         _schema(args), args.out)
    _stamp(manifest, started)
    write_report(body, manifest, args.out)
    return EXIT_OK


def cmd_mc(args, argv) -> int:
    started = time.time()
    cfg = _config(args)
    if args.mc_command == "power-curve":
        spec = DgpSpec(args.kind, 1.0, args.n, args.seed, args.zeta_sd)
        curve = power_curve(spec, args.rho, args.reps, cfg, args.test, args.threads)
        body = {"rho": curve.rho_grid, "reject_rate": curve.rejection_rate, "se": curve.se,
                "n": curve.n, "reps": curve.reps}
        table = curve
    else:
        null = DgpSpec(args.kind, args.null_rho, args.n, args.seed, args.zeta_sd)
        alt = DgpSpec(args.kind, args.alt_rho, args.n, args.seed, args.zeta_sd)
        table = tuning_sweep(args.b0_grid, args.kappa_grid, null, alt, args.reps, cfg, args.test,
                             args.size_slack, args.threads)
        body = {"rows": [asdict(r) for r in table.rows],
                "best": None if table.best is None else asdict(table.best)}
    if args.out:
        try:
            table.to_csv(args.out)
        except OSError as exc:
            raise OutputError(f"cannot write {args.out}: {exc}") from exc
    config = {**cfg.to_dict(), "kind": args.kind, "test": args.test, "n": args.n, "reps": args.reps,
              "zeta_sd": args.zeta_sd}
    manifest = _manifest(args, argv, {}, config, args.test, {}, args.out)
    _stamp(manifest, started)
    write_report(body, manifest, None)
    return EXIT_OK


def cmd_oracle(args, argv) -> int:
    started = time.time()
    inputs, config = {}, {}
    if args.oracle_command == "thresholds":
        config = {"zeta_sd": args.zeta_sd, "method": args.method}
        base = population_threshold_no_covariates(args.zeta_sd, method=args.method)
        two = population_threshold_two_point_bias()
        body = {"rho_star": base.rho_star, "rho_var": base.rho_var, "tail_rho": base.tail_rho,
                "binding_y": base.binding_y, "a_star": two.a_star, "var_eta_at_a_star": two.var_eta}
        if not args.no_covariate_design:
            cov = population_threshold_covariate_design(zeta_sd=args.zeta_sd, nodes=60, xtol=1e-4)
            body["covariate_design"] = {"without_x": cov["without_x"], "with_x": cov["with_x"]}
    else:
        inputs = {"outcome": args.outcome, "belief": args.belief}
        config = {"tol": args.tol}
        f_y, f_psi = DiscreteDist.from_csv(args.outcome), DiscreteDist.from_csv(args.belief)
        if args.oracle_command == "check-mps":
            v = check_mps(f_y, f_psi, args.tol)
            body = {"holds": v.holds, "status": v.status, "y": v.y, "gap": v.gap}
        else:
            cpl = construct_martingale_coupling(f_psi, f_y, args.tol)
            body = {"feasible": cpl is not None}
            if cpl is not None:
                body.update(belief_support=cpl.row_dist.support, outcome_support=cpl.col_dist.support,
                            joint=cpl.joint, martingale_residual=cpl.martingale_residual())
    manifest = _manifest(args, argv, inputs, config, args.oracle_command, {}, args.out)
    _stamp(manifest, started)
    write_report(body, manifest, args.out)
    return EXIT_OK


COMMANDS = {"test": cmd_test, "classic": cmd_classic, "mc": cmd_mc, "oracle": cmd_oracle}


def _fail(code: int, exc: BaseException, fmt: str) -> int:
    if fmt == "text":
        print(f"error: {exc}", file=sys.stderr)
    else:
        err = {"type": type(exc).__name__, "message": str(exc)}
        row = getattr(exc, "row", None)
        if row is not None:
            err["row"] = row
        print(json.dumps({"error": err, "exit_code": code}), file=sys.stderr)
    return code


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    fmt = "json"
    try:
        args = build_parser().parse_args(argv)
        fmt = args.error_format
        return COMMANDS[args.command](args, argv)
    except UsageError as exc:
        return _fail(EXIT_USAGE, exc, fmt)
    except OutputError as exc:
        return _fail(EXIT_IO, exc, fmt)
    except (RatexpError, OSError, ValueError) as exc:
        return _fail(EXIT_DATA, exc, fmt)


if __name__ == "__main__":
    sys.exit(main())
