"""Command-line front end.

Every command prints one machine-readable document on stdout (JSON by
default) echoing its full parameters; diagnostics go to stderr. Exit codes:
0 success, 2 invalid arguments, 3 missing file, 4 malformed input file.

CSV columns
-----------
confidence  n,alpha,q,p,threshold_k,threshold_t,achieved_alpha,log_beta,beta,beta_paper,rho,degenerate,vacuous
sweep       n,beta,rho               (single strategy)
            n,beta_<f>,rho_<f>,...   (one pair per poison-table row, <f> = f_data)
samples     n_needed
bayes       expected_rho,point_rho
multiuser   probability,stderr,trials,accepts
capacity    n,d,w,exact,lower_bound,upper_bound,method,collision_probability,max_users
simulate    per-user table: user_id,rate,collided,p_hat,q_hat,q_reference,threshold_k,accepts,rejects,estimated_rho
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from fractions import Fraction
from pathlib import Path

from . import __version__
from .capacity import (
    DEFAULT_BRUTE_FORCE_CAP,
    DEFAULT_NODE_LIMIT,
    CodeParams,
    awd,
    backdoor_count,
    collision_probability,
    max_users,
)
from .core import (
    PRNG_ALGORITHM,
    OutcomeVector,
    Strategy,
    TestPlan,
    deletion_confidence,
    log_beta_to_paper,
    samples_needed,
)
from .errors import DegenerateStrategyError, DomainError, UnlearnVerifyError, UsageError
from .estimation import (
    DEFAULT_GRID_SIZE,
    PosteriorGrid,
    RateEstimate,
    RateSource,
    expected_confidence,
    posterior,
)
from .multiuser import Population, UserReport, false_negative_probability, pooled_test
from .simulator import ServerPolicy, SimConfig, end_to_end

EXIT_USAGE = 2
EXIT_NOT_FOUND = 3
EXIT_SCHEMA = 4


class InputFileError(Exception):
    """A supplied file exists but its contents are malformed."""

    def __init__(self, message, pointer=""):
        super().__init__(message)
        self.pointer = pointer


def parse_rate(text):
    """A probability given as a decimal or an exact fraction ``k/n``."""
    try:
        value = Fraction(str(text).strip())
    except (ValueError, ZeroDivisionError):
        raise argparse.ArgumentTypeError(f"not a rate: {text!r}") from None
    if not (0 <= value <= 1):
        raise argparse.ArgumentTypeError(f"rate {text!r} outside [0, 1]")
    return float(value)


def _paper(value_log):
    return log_beta_to_paper(value_log)


def _result_payload(result):
    payload = result.to_dict()
    payload["beta_paper"] = _paper(result.log_beta)
    return payload


# ------------------------------------------------------------------ commands

def cmd_confidence(args):
    plan = TestPlan(args.n, args.alpha)
    result = deletion_confidence(plan, Strategy(q=args.q, p=args.p))
    warnings = []
    if result.degenerate:
        warnings.append("degenerate strategy: p <= q, the test has no power")
    if result.vacuous:
        warnings.append("vacuous plan: H0 can never be rejected")
    return _result_payload(result), warnings, [_result_payload(result)]


def _load_poison_table(path):
    rows = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not {"f_data", "p", "q"} <= set(reader.fieldnames):
            raise InputFileError(f"{path}: header must contain f_data,p,q")
        for i, row in enumerate(reader):
            try:
                rows.append((row["f_data"], Strategy(q=float(row["q"]), p=float(row["p"]))))
            except (ValueError, DomainError) as exc:
                raise InputFileError(f"{path}: row {i}: {exc}", f"/{i}") from None
    if not rows:
        raise InputFileError(f"{path}: no rows")
    return rows


def cmd_sweep(args):
    if args.poison_table:
        strategies = _load_poison_table(args.poison_table)
    else:
        if args.p is None or args.q is None:
            raise UsageError("sweep needs --p and --q, or --poison-table")
        strategies = [(None, Strategy(q=args.q, p=args.p))]
    rows = []
    for n in range(1, args.n_max + 1):
        plan = TestPlan(n, args.alpha)
        row = {"n": n}
        for label, s in strategies:
            r = deletion_confidence(plan, s)
            suffix = "" if label is None else f"_{label}"
            row[f"beta{suffix}"] = r.beta
            row[f"rho{suffix}"] = r.rho
        rows.append(row)
    return {"rows": rows}, [], rows


def cmd_samples(args):
    s = Strategy(q=args.q, p=args.p)
    n = samples_needed(s, args.alpha, args.rho_target, args.n_max)
    result = {"n_needed": n, "found": n is not None}
    if n is not None:
        result["at_n"] = _result_payload(deletion_confidence(TestPlan(n, args.alpha), s))
    return result, [], [{"n_needed": "" if n is None else n}]


def _estimate(text, n_obs, source):
    try:
        return RateEstimate.parse(text, n_obs, source)
    except (ValueError, ZeroDivisionError) as exc:
        raise UsageError(str(exc)) from None


def cmd_bayes(args):
    plan = TestPlan(args.n, args.alpha)
    p_hat = _estimate(args.p_hat, args.p_obs or args.n, RateSource.POST_TRAINING_QUERY)
    q_hat = _estimate(args.q_hat, args.q_obs or args.n, RateSource.ALTERNATE_PATTERN_QUERY)
    prior = PosteriorGrid.uniform(args.grid)
    q_post = posterior(q_hat, prior)
    p_post = posterior(p_hat, prior)
    value = expected_confidence(plan, q_post, p_post)
    point = deletion_confidence(plan, Strategy(q=float(q_hat.r_hat), p=float(p_hat.r_hat)))
    if args.posterior_out:
        Path(args.posterior_out).write_text(json.dumps(
            {"schema_version": 1, "q_posterior": q_post.to_dict(), "p_posterior": p_post.to_dict()}))
    result = {
        "expected_rho": value,
        "point_rho": point.rho,
        "prior": prior.prior_name,
        "grid_size": args.grid,
        "q_hat": str(q_hat.r_hat),
        "p_hat": str(p_hat.r_hat),
        "q_posterior_mean": q_post.mean(),
        "p_posterior_mean": p_post.mean(),
    }
    return result, [], [{"expected_rho": value, "point_rho": point.rho}]


def _load_reports(path):
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise InputFileError(f"{path}: invalid JSON: {exc}") from None
    if not isinstance(data, list):
        raise InputFileError(f"{path}: expected a list of reports", "")
    reports = []
    for i, item in enumerate(data):
        try:
            outcomes = OutcomeVector(item["outcomes"])
            reports.append(UserReport(
                str(item.get("user_id", i)),
                RateEstimate.parse(item["p_hat"], len(outcomes)),
                RateEstimate.parse(item["q_hat"], len(outcomes),
                                   RateSource.ALTERNATE_PATTERN_QUERY),
                outcomes,
            ))
        except KeyError as exc:
            raise InputFileError(f"{path}: report {i} lacks {exc}", f"/{i}") from None
        except (ValueError, TypeError) as exc:
            raise InputFileError(f"{path}: report {i}: {exc}", f"/{i}") from None
    return reports


def cmd_multiuser(args):
    if args.reports:
        decision = pooled_test(_load_reports(args.reports), args.alpha, args.beta_bound)
        payload = decision.to_dict()
        return payload, [], [{"decision": payload["decision"],
                              "count_decision": payload["count_decision"]}]
    if not args.population:
        raise UsageError("multiuser needs --population or --reports")
    for flag in ("c", "n", "trials", "seed"):
        if getattr(args, flag) is None:
            raise UsageError(f"--{flag} is required with --population")
    try:
        pop = Population.from_csv(args.population)
    except (DomainError, UsageError) as exc:
        raise InputFileError(str(exc)) from None
    est = false_negative_probability(pop, args.c, args.n, args.alpha, args.beta_bound,
                                     args.trials, args.seed,
                                     replace=not args.without_replacement)
    return est.to_dict(), [], [est.to_dict()]


def cmd_capacity(args):
    params = CodeParams(args.n, args.d, args.w)
    res = awd(params, brute_force_cap=args.cap, node_limit=args.node_limit)
    result = {"awd": res.to_dict()}
    warnings = []
    if params.d != params.even_d:
        warnings.append(f"odd d={params.d} normalized to {params.even_d}")
    if args.sum:
        result["backdoor_count"] = backdoor_count(
            params, brute_force_cap=args.cap, node_limit=args.node_limit).to_dict()
    # conservative: the smallest capacity consistent with the bounds
    capacity = res.exact if res.exact is not None else res.lower_bound
    result["capacity_used"] = capacity
    row = dict(res.to_dict())
    row.pop("normalized_d")
    if args.users is not None:
        result["collision_probability"] = collision_probability(args.users, capacity)
        row["collision_probability"] = result["collision_probability"]
    if args.budget is not None:
        result["max_users"] = max_users(capacity, args.budget)
        row["max_users"] = result["max_users"]
    return result, warnings, [row]


def _load_config(path):
    import jsonschema

    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise InputFileError(f"{path}: invalid JSON: {exc}") from None
    try:
        return SimConfig.from_dict(data, base_dir=Path(path).parent)
    except jsonschema.ValidationError as exc:
        pointer = "".join(f"/{p}" for p in exc.absolute_path)
        raise InputFileError(f"{path}: {exc.message}", pointer) from None
    except (DomainError, UsageError, ValueError) as exc:
        raise InputFileError(f"{path}: {exc}") from None


def cmd_simulate(args):
    config = _load_config(args.config)
    if args.policy == ServerPolicy.ADAPTIVE.value and config.adaptive_p is None:
        raise InputFileError(f"{args.config}: the adaptive policy needs adaptive_p",
                             "/adaptive_p")
    result = end_to_end(config, ServerPolicy(args.policy), TestPlan(args.n, args.alpha),
                        trials=args.trials)
    if args.csv:
        result.write_csv(args.csv)
    payload = result.to_dict()
    payload["config"] = config.to_dict()
    return payload, [], [u.to_row() for u in result.users]


COMMANDS = {
    "confidence": cmd_confidence,
    "sweep": cmd_sweep,
    "samples": cmd_samples,
    "bayes": cmd_bayes,
    "multiuser": cmd_multiuser,
    "capacity": cmd_capacity,
    "simulate": cmd_simulate,
}
STOCHASTIC = {"multiuser", "simulate"}
# flags each command cannot run without (possibly supplied by --from-json)
REQUIRED = {
    "confidence": ("p", "q", "n", "alpha"),
    "sweep": ("alpha", "n_max"),
    "samples": ("p", "q", "alpha", "rho_target", "n_max"),
    "bayes": ("p_hat", "q_hat", "n", "alpha"),
    "multiuser": ("alpha", "beta_bound"),
    "capacity": ("n", "w", "d"),
    "simulate": ("config", "policy", "n", "alpha"),
}


def build_parser():
    parser = argparse.ArgumentParser(
        prog="unlearn-verify",
        description="Verify machine unlearning with backdoor hypothesis tests.",
        epilog="CSV columns:\n" + __doc__.split("-----------\n", 1)[1],
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, default_format="json"):
        p.add_argument("--format", choices=("json", "csv", "table"), default=default_format)
        p.add_argument("--from-json", metavar="PATH",
                       help="reuse the parameters echoed by an earlier JSON output")

    p = sub.add_parser("confidence", help="deletion confidence for one strategy")
    p.add_argument("--p", type=parse_rate)
    p.add_argument("--q", type=parse_rate)
    p.add_argument("--n", type=int)
    p.add_argument("--alpha", type=float)
    common(p)

    p = sub.add_parser("sweep", help="beta and rho for n = 1..n_max (CSV)")
    p.add_argument("--p", type=parse_rate)
    p.add_argument("--q", type=parse_rate)
    p.add_argument("--alpha", type=float)
    p.add_argument("--n-max", type=int)
    p.add_argument("--poison-table", metavar="CSV", help="columns f_data,p,q")
    common(p, "csv")

    p = sub.add_parser("samples", help="smallest n reaching a target confidence")
    p.add_argument("--p", type=parse_rate)
    p.add_argument("--q", type=parse_rate)
    p.add_argument("--alpha", type=float)
    p.add_argument("--rho-target", type=float)
    p.add_argument("--n-max", type=int, default=1000)
    common(p)

    p = sub.add_parser("bayes", help="posterior-expected confidence from estimates")
    p.add_argument("--p-hat", help="k/n or decimal")
    p.add_argument("--q-hat", help="k/n or decimal")
    p.add_argument("--p-obs", type=int, help="observations behind a decimal --p-hat")
    p.add_argument("--q-obs", type=int, help="observations behind a decimal --q-hat")
    p.add_argument("--n", type=int)
    p.add_argument("--alpha", type=float)
    p.add_argument("--grid", type=int, default=DEFAULT_GRID_SIZE)
    p.add_argument("--posterior-out", metavar="JSON")
    common(p)

    p = sub.add_parser("multiuser", help="pooled test or its false-negative rate")
    p.add_argument("--population", metavar="CSV", help="columns p_true,q_true")
    p.add_argument("--reports", metavar="JSON", help="list of user reports for one pooled test")
    p.add_argument("--c", type=int)
    p.add_argument("--n", type=int)
    p.add_argument("--alpha", type=float)
    p.add_argument("--beta-bound", type=float)
    p.add_argument("--trials", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--without-replacement", action="store_true")
    common(p)

    p = sub.add_parser("capacity", help="trigger capacity and collision risk")
    p.add_argument("--n", type=int)
    p.add_argument("--w", type=int)
    p.add_argument("--d", type=int)
    p.add_argument("--users", type=int)
    p.add_argument("--budget", type=float)
    p.add_argument("--sum", action="store_true", help="also report the summed trigger count")
    p.add_argument("--cap", type=int, default=DEFAULT_BRUTE_FORCE_CAP)
    p.add_argument("--node-limit", type=int, default=DEFAULT_NODE_LIMIT)
    common(p)

    p = sub.add_parser("simulate", help="end-to-end Bernoulli simulation")
    p.add_argument("--config", metavar="JSON")
    p.add_argument("--policy", choices=[x.value for x in ServerPolicy])
    p.add_argument("--n", type=int)
    p.add_argument("--alpha", type=float)
    p.add_argument("--trials", type=int, default=1)
    p.add_argument("--csv", metavar="PATH", help="also write the per-user table")
    common(p)
    return parser


def _render(fmt, envelope, rows):
    if fmt == "json":
        return json.dumps(envelope, indent=2, allow_nan=False, default=str) + "\n"
    if fmt == "csv":
        buf = io.StringIO()
        if rows:
            writer = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
            writer.writeheader()
            writer.writerows(rows)
        return buf.getvalue()
    lines = []
    for row in rows:
        width = max(len(k) for k in row)
        lines.extend(f"{k:<{width}}  {v}" for k, v in row.items())
        lines.append("")
    return "\n".join(lines)


def _apply_from_json(parser, args, argv):
    """Fill parameters not given on the command line from an echoed envelope."""
    path = Path(args.from_json)
    data = json.loads(path.read_text())
    params = data.get("parameters", data)
    if data.get("command") not in (None, args.command):
        raise UsageError(f"{path} holds parameters for {data['command']!r}")
    defaults = vars(parser.parse_args([args.command]))
    for key, value in params.items():
        if key in ("command", "format", "from_json"):
            continue
        if getattr(args, key, None) == defaults.get(key):
            setattr(args, key, value)


def main(argv=None):
    parser = build_parser()
    argv = sys.argv[1:] if argv is None else list(argv)
    args = parser.parse_args(argv)
    try:
        if args.from_json:
            _apply_from_json(parser, args, argv)
        missing = [k for k in REQUIRED[args.command] if getattr(args, k, None) is None]
        if missing:
            subparsers = parser._subparsers._group_actions[0].choices
            subparsers[args.command].error("missing " + ", ".join(
                "--" + k.replace("_", "-") for k in missing))
        results, warnings, rows = COMMANDS[args.command](args)
    except FileNotFoundError as exc:
        print(f"error: file not found: {exc.filename}", file=sys.stderr)
        return EXIT_NOT_FOUND
    except InputFileError as exc:
        where = f" at {exc.pointer}" if exc.pointer else ""
        print(f"error: invalid input{where}: {exc}", file=sys.stderr)
        return EXIT_SCHEMA
    except (UnlearnVerifyError, DegenerateStrategyError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    for w in warnings:
        print(f"warning: {w}", file=sys.stderr)
    parameters = {k: v for k, v in vars(args).items()
                  if k not in ("command", "format", "from_json")}
    envelope = {
        "tool_version": __version__,
        "command": args.command,
        "parameters": parameters,
        "seed": _seed_of(args, results) if args.command in STOCHASTIC else None,
        "prng_algorithm": PRNG_ALGORITHM if args.command in STOCHASTIC else None,
        "results": results,
        "warnings": warnings,
    }
    sys.stdout.write(_render(args.format, envelope, rows))
    return 0


def _seed_of(args, results):
    if args.command == "simulate":
        return results["config"]["seed"]
    return args.seed


if __name__ == "__main__":
    sys.exit(main())
