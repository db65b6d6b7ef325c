"""Command-line front-end.

Every run prints one :class:`RunRecord` per line as JSON (default) or as a
CSV row.  Exit codes: 0 success, 2 usage error, 3 domain or validity error,
4 tolerance not reached (the record is still printed, with ``converged``
false).
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from dataclasses import asdict, dataclass
from typing import Any

from . import __version__
from .asymptotics import (
    LevelSpec,
    alpha_asym,
    alpha_bracket,
    alpha_from_levels,
    invert_chi2_tail,
    validity_check,
)
from .bessel_process import BesselQuery, bessel_tail_quad, map_to_chi2
from .model import TestDesign
from .montecarlo import TrialScheme, simulate_bessel_joint, simulate_pearson_joint
from .quadrature import CriticalPair, alpha_quad, bonferroni_bounds
from .special_fn import DomainError, infeld_scaled, psi_envelope

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DOMAIN = 3
EXIT_TOLERANCE = 4


@dataclass
class RunRecord:
    command: str
    inputs: dict[str, Any]
    outputs: dict[str, Any]
    version: str = __version__
    seed: int | None = None

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True, allow_nan=False)

    @classmethod
    def from_json(cls, text: str) -> "RunRecord":
        data = json.loads(text)
        missing = {"command", "inputs", "outputs", "version"} - data.keys()
        if missing:
            raise ValueError(f"record lacks fields {sorted(missing)}")
        return cls(data["command"], data["inputs"], data["outputs"], data["version"], data.get("seed"))

    def flat(self) -> dict[str, Any]:
        row = {"command": self.command, "version": self.version, "seed": self.seed}
        row.update({f"in.{k}": _csv_cell(v) for k, v in self.inputs.items()})
        row.update({f"out.{k}": _csv_cell(v) for k, v in self.outputs.items()})
        return row


def _csv_cell(v):
    return json.dumps(v) if isinstance(v, (list, dict)) else v


def _finite(v: float) -> float | None:
    """JSON has no infinities; non-finite values become null."""
    return float(v) if math.isfinite(v) else None


def _alpha_fields(log_alpha: float) -> dict[str, Any]:
    alpha = math.exp(log_alpha) if math.isfinite(log_alpha) else 0.0
    return {
        "log_alpha": _finite(log_alpha),
        "alpha": alpha,
        "underflow": bool(alpha == 0.0 and log_alpha != -math.inf) or log_alpha == -math.inf,
    }


@dataclass
class Outcome:
    record: RunRecord
    code: int = EXIT_OK
    message: str = ""


class CommandError(Exception):
    """Domain failure carrying the names of the failed conditions."""

    def __init__(self, message: str, failed: list[str] | None = None):
        super().__init__(message)
        self.failed = failed or []


# ---------------------------------------------------------------- helpers


def _design(args) -> TestDesign:
    if args.c is not None:
        if args.n1 is not None or args.n2 is not None:
            raise CommandError("give either --c or --n1/--n2, not both")
        return TestDesign(args.n_categories, args.c)
    if args.n1 is None or args.n2 is None:
        raise CommandError("give --c or both --n1 and --n2")
    return TestDesign.from_sizes(args.n1, args.n2, args.n_categories)


def _design_inputs(args, design: TestDesign) -> dict[str, Any]:
    out = {"n_categories": design.n_outcomes, "c": design.c}
    if args.n1 is not None:
        out.update(n1=args.n1, n2=args.n2)
    return out


def _bracket_outputs(levels: CriticalPair, design: TestDesign) -> tuple[dict[str, Any], int]:
    diag = validity_check(levels, design)
    if not diag.ok:
        raise CommandError("validity conditions failed: " + ", ".join(diag.failed), diag.failed)
    res = alpha_bracket(levels, design)
    if math.isfinite(res.log_lo):
        log_mid = res.log_hi + math.log1p(math.exp(res.log_lo - res.log_hi)) - math.log(2)
    else:
        log_mid = res.log_hi - math.log(2)
    out = _alpha_fields(log_mid)
    out.update(
        bracket_lo_log=_finite(res.log_lo),
        bracket_hi_log=res.log_hi,
        bracket_lo=res.enclosure.lo,
        bracket_hi=res.enclosure.hi,
        rel_halfwidth=res.rel_halfwidth,
        lo_vacuous=res.lo_vacuous,
        epsilon=res.ledger.epsilon,
        psi=res.ledger.theta1_bound,
        diagnostics={k: v for k, v in diag.checks.items()},
    )
    return out, EXIT_OK


def _quad_outputs(levels: CriticalPair, design: TestDesign, rel_tol: float) -> tuple[dict[str, Any], int]:
    res = alpha_quad(levels, design, rel_tol=rel_tol)
    out = _alpha_fields(res.log_alpha)
    out.update(est_rel_error=_finite(res.rel_error), panels=res.panels, converged=res.converged)
    return out, EXIT_OK if res.converged else EXIT_TOLERANCE


def _asym_outputs(levels: CriticalPair, design: TestDesign) -> tuple[dict[str, Any], int]:
    if levels.x1_star <= 0:
        raise CommandError("x1 must be positive for the asymptotic formula")
    c = design.c
    if not c < levels.rho < 1 / c:
        raise CommandError(f"rho={levels.rho} outside (c, 1/c)", ["rho window"])
    return _alpha_fields(alpha_asym(levels.x1_star, levels.rho, design)), EXIT_OK


def _evaluate(method: str, levels: CriticalPair, design: TestDesign, rel_tol: float):
    if method == "quad":
        return _quad_outputs(levels, design, rel_tol)
    if method == "asym":
        return _asym_outputs(levels, design)
    return _bracket_outputs(levels, design)


def _floats(text: str) -> list[float]:
    try:
        return [float(t) for t in text.replace(";", ",").split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _matrix(text: str) -> list[list[float]]:
    """Rows separated by ';', entries by ','; or a JSON nested list."""
    text = text.strip()
    if text.startswith("["):
        try:
            return json.loads(text)
        except json.JSONDecodeError as exc:
            raise argparse.ArgumentTypeError(f"bad JSON matrix: {exc}") from None
    try:
        return [[float(t) for t in row.split(",")] for row in text.split(";") if row.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad matrix {text!r}") from None


# ---------------------------------------------------------------- commands


def cmd_alpha(args) -> Outcome:
    design = _design(args)
    levels = CriticalPair(args.x1, args.x2)
    inputs = {**_design_inputs(args, design), "x1": args.x1, "x2": args.x2, "method": args.method,
              "rel_tol": args.rel_tol}
    outputs, code = _evaluate(args.method, levels, design, args.rel_tol)
    return Outcome(RunRecord("alpha", inputs, outputs), code)


def cmd_levels(args) -> Outcome:
    design = _design(args)
    if (args.p is None) == (args.alpha2 is None):
        raise CommandError("give exactly one of --p and --alpha2")
    spec = LevelSpec(args.alpha1, args.p) if args.p is not None else LevelSpec.from_alphas(args.alpha1, args.alpha2)
    inputs = {**_design_inputs(args, design), "alpha1": args.alpha1, "p": args.p, "alpha2": args.alpha2,
              "method": args.method, "rel_tol": args.rel_tol}
    k = design.dof
    x1 = invert_chi2_tail(spec.alpha1, k)
    x2 = invert_chi2_tail(spec.alpha2, k) if spec.log_alpha2 > -700 else math.nan
    if args.method == "asym":
        outputs, code = _alpha_fields(alpha_from_levels(spec, design)), EXIT_OK
    else:
        if not math.isfinite(x2):
            raise CommandError("alpha2 is below double range; use --method asym")
        outputs, code = _evaluate(args.method, CriticalPair(x1, x2), design, args.rel_tol)
    outputs.update(p_ratio=spec.p_ratio, log_alpha2=spec.log_alpha2, x1_star=x1, x2_star=_finite(x2))
    return Outcome(RunRecord("levels", inputs, outputs), code)


def cmd_bessel(args) -> Outcome:
    q = BesselQuery(args.d, args.s1, args.s2, args.x1, args.x2)
    levels, design = map_to_chi2(q.normalized())
    inputs = {"d": q.d, "s1": q.s1, "s2": q.s2, "x1": q.x1, "x2": q.x2, "method": args.method,
              "rel_tol": args.rel_tol}
    if args.method == "quad":
        res = bessel_tail_quad(q, rel_tol=args.rel_tol)
        outputs = _alpha_fields(res.log_alpha)
        outputs.update(est_rel_error=_finite(res.rel_error), panels=res.panels, converged=res.converged)
        code = EXIT_OK if res.converged else EXIT_TOLERANCE
    else:
        outputs, code = _evaluate(args.method, levels, design, args.rel_tol)
    outputs.update(x1_star=levels.x1_star, x2_star=levels.x2_star, c=design.c, n_categories=design.n_outcomes)
    return Outcome(RunRecord("bessel", inputs, outputs), code)


def cmd_mc(args) -> Outcome:
    if args.mode == "pearson":
        if args.probs is not None:
            scheme = TrialScheme(tuple(args.probs), args.n1, args.n2)
        else:
            scheme = TrialScheme.uniform(args.n_categories, args.n1, args.n2)
        inputs = {"mode": "pearson", "probs": list(scheme.probs), "n1": scheme.n1, "n2": scheme.n2,
                  "x1": args.x1, "x2": args.x2, "reps": args.reps}
        est = simulate_pearson_joint(scheme, args.x1, args.x2, args.reps, args.seed, workers=args.workers)
    else:
        q = BesselQuery(args.d, args.s1, args.s2, args.x1, args.x2)
        inputs = {"mode": "bessel", "d": q.d, "s1": q.s1, "s2": q.s2, "x1": q.x1, "x2": q.x2, "reps": args.reps}
        est = simulate_bessel_joint(q, args.reps, args.seed, workers=args.workers)
    outputs = _alpha_fields(math.log(est.p_hat) if est.p_hat > 0 else -math.inf)
    outputs.update(p_hat=est.p_hat, std_err=est.std_err, hits=est.hits)
    return Outcome(RunRecord("mc", inputs, outputs, seed=args.seed))


def cmd_bonferroni(args) -> Outcome:
    res = bonferroni_bounds(args.marginals, args.pairwise)
    inputs = {"marginals": args.marginals, "pairwise": args.pairwise}
    best = res.best
    outputs = _alpha_fields(math.log(best.mid) if best.mid > 0 else -math.inf)
    for name, enc in (("first_order", res.first_order), ("second_order", res.second_order), ("best", best)):
        outputs[f"{name}_lo"] = enc.lo
        outputs[f"{name}_hi"] = enc.hi
    return Outcome(RunRecord("bonferroni", inputs, outputs))


def cmd_infeld(args) -> Outcome:
    enc = infeld_scaled(args.nu, args.x)
    outputs: dict[str, Any] = {
        "scaled_lo": enc.lo,
        "scaled_hi": enc.hi,
        "branch": enc.tag,
        "log_value": _finite(math.log(enc.mid) + args.x) if enc.mid > 0 else None,
    }
    try:
        outputs["psi"] = psi_envelope(args.nu, args.x)
    except DomainError:
        outputs["psi"] = None
    return Outcome(RunRecord("infeld", {"nu": args.nu, "x": args.x}, outputs))


# ---------------------------------------------------------------- parser


def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--format", choices=("json", "csv"), default="json")
    p.add_argument("--quiet", action="store_true", help="suppress messages on standard error")
    p.add_argument("--grid", metavar="CSV", help="CSV file of parameter rows; header names are flag names")
    return p


def _design_flags(p: argparse.ArgumentParser, required_n: bool = True):
    p.add_argument("--n-categories", type=int, required=required_n, default=None if required_n else 5)
    p.add_argument("--c", type=float)
    p.add_argument("--n1", type=int)
    p.add_argument("--n2", type=int)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="seqchi2", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    common = _common()

    p = sub.add_parser("alpha", parents=[common], help="joint level alpha(x1*, x2*)")
    _design_flags(p, required_n=False)
    p.add_argument("--x1", type=float, required=True)
    p.add_argument("--x2", type=float, required=True)
    p.add_argument("--method", choices=("quad", "asym", "bracket"), default="quad")
    p.add_argument("--rel-tol", type=float, default=1e-10)
    p.set_defaults(func=cmd_alpha)

    p = sub.add_parser("levels", parents=[common], help="alpha from marginal levels")
    _design_flags(p, required_n=False)
    p.add_argument("--alpha1", type=float, required=True)
    p.add_argument("--p", type=float)
    p.add_argument("--alpha2", type=float)
    p.add_argument("--method", choices=("asym", "quad", "bracket"), default="asym")
    p.add_argument("--rel-tol", type=float, default=1e-10)
    p.set_defaults(func=cmd_levels)

    p = sub.add_parser("bessel", parents=[common], help="two-time Bessel process tail")
    p.add_argument("--d", type=int, required=True)
    p.add_argument("--s1", type=float, required=True)
    p.add_argument("--s2", type=float, required=True)
    p.add_argument("--x1", type=float, required=True)
    p.add_argument("--x2", type=float, required=True)
    p.add_argument("--method", choices=("quad", "asym", "bracket"), default="quad")
    p.add_argument("--rel-tol", type=float, default=1e-10)
    p.set_defaults(func=cmd_bessel)

    p = sub.add_parser("mc", parents=[common], help="Monte Carlo estimate")
    p.add_argument("--mode", choices=("pearson", "bessel"), default="pearson")
    p.add_argument("--reps", type=int, default=100000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=None, help="threads (default: $SEQCHI2_WORKERS or CPU count)")
    p.add_argument("--n-categories", type=int, default=5)
    p.add_argument("--probs", type=_floats)
    p.add_argument("--n1", type=int, default=4900)
    p.add_argument("--n2", type=int, default=10000)
    p.add_argument("--d", type=int, default=3)
    p.add_argument("--s1", type=float, default=1.0)
    p.add_argument("--s2", type=float, default=2.0)
    p.add_argument("--x1", type=float, default=None, help="pearson: x1* (default 15); bessel: x1 (default 3)")
    p.add_argument("--x2", type=float, default=None, help="pearson: x2* (default 15); bessel: x2 (default 3.8)")
    p.set_defaults(func=cmd_mc)

    p = sub.add_parser("bonferroni", parents=[common], help="Bonferroni bounds for r stages")
    p.add_argument("--marginals", type=_floats, required=True)
    p.add_argument("--pairwise", type=_matrix)
    p.set_defaults(func=cmd_bonferroni)

    p = sub.add_parser("infeld", parents=[common], help="certified exp(-x) I_nu(x)")
    p.add_argument("--nu", type=float, required=True)
    p.add_argument("--x", type=float, required=True)
    p.set_defaults(func=cmd_infeld)
    return parser


_MC_DEFAULTS = {"pearson": (15.0, 15.0), "bessel": (3.0, 3.8)}


def _fill_defaults(args):
    if args.command == "mc":
        d1, d2 = _MC_DEFAULTS[args.mode]
        args.x1 = d1 if args.x1 is None else args.x1
        args.x2 = d2 if args.x2 is None else args.x2
    if args.command in ("alpha", "levels") and args.n_categories is None:
        args.n_categories = 5
    return args


def _grid_rows(path: str) -> list[list[str]]:
    """Turn each CSV row into extra argv tokens ``--name value``."""
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        rows = []
        for row in reader:
            tokens = []
            for key, value in row.items():
                if key is None or value is None or value.strip() == "":
                    continue
                tokens += ["--" + key.strip().replace("_", "-"), value.strip()]
            rows.append(tokens)
    return rows


def _run_one(parser, argv: list[str]) -> Outcome:
    args = _fill_defaults(parser.parse_args(argv))
    try:
        return args.func(args)
    except CommandError as exc:
        failed = exc.failed
        record = RunRecord(args.command, {"argv": argv}, {"error": str(exc), "failed_conditions": failed,
                                                          "log_alpha": None})
        return Outcome(record, EXIT_DOMAIN, str(exc))
    except (DomainError, ValueError, OverflowError) as exc:
        record = RunRecord(args.command, {"argv": argv}, {"error": str(exc), "failed_conditions": [],
                                                          "log_alpha": None})
        return Outcome(record, EXIT_DOMAIN, str(exc))


def _emit(outcomes: list[Outcome], fmt: str, out) -> None:
    if fmt == "json":
        for o in outcomes:
            out.write(o.record.to_json() + "\n")
        return
    rows = [o.record.flat() for o in outcomes]
    fields: list[str] = []
    for r in rows:
        fields += [k for k in r if k not in fields]
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=fields, lineterminator="\n")
    writer.writeheader()
    writer.writerows(rows)
    out.write(buf.getvalue())


def run(argv: list[str] | None = None, out=None, err=None) -> int:
    out = sys.stdout if out is None else out
    err = sys.stderr if err is None else err
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    head, _ = _common().parse_known_args(argv)
    try:
        if head.grid:
            try:
                extra_rows = _grid_rows(head.grid)
            except OSError as exc:
                err.write(f"seqchi2: cannot read grid: {exc}\n")
                return EXIT_USAGE
            base = _strip_grid(argv)
            outcomes = [_run_one(parser, base + extra) for extra in extra_rows]
        else:
            outcomes = [_run_one(parser, argv)]
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    _emit(outcomes, head.format, out)
    if not head.quiet:
        for o in outcomes:
            if o.message:
                err.write(f"seqchi2 {o.record.command}: {o.message}\n")
            elif o.code == EXIT_TOLERANCE:
                err.write(f"seqchi2 {o.record.command}: requested tolerance not reached\n")
    return max((o.code for o in outcomes), default=EXIT_OK)


def _strip_grid(argv: list[str]) -> list[str]:
    out, skip = [], False
    for tok in argv:
        if skip:
            skip = False
            continue
        if tok == "--grid":
            skip = True
            continue
        if tok.startswith("--grid="):
            continue
        out.append(tok)
    return out


def main(argv: list[str] | None = None) -> None:
    sys.exit(run(argv))

