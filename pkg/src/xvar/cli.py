"""Command-line interface: ``xvar <command> [options]``.

Settings resolve as defaults < ``--config`` JSON file < ``XVAR_*``
environment variables < command-line flags.  JSON output rounds floats to
six significant digits so files are byte-stable across runs.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .calibration import DEFAULT_LAMBDA, project_to_consistent
from .closed_form import BoundsResult, Method, dvariate_bounds, dvariate_curve, frechet_result, lower_bound_L, upper_bound_U
from .core import SubsetFamily, check_consistency, full_mask, subset_key
from .errors import InconsistentInput, InputError, XvarError
from .estimation import (
    DEFAULT_Q0,
    LossPanel,
    common_xi_fit,
    default_family_masks,
    estimate_extremal_coeffs,
    read_loss_csv,
    return_level_bounds,
    var_curves,
)
from .mkt_sectors import SectorPartition, composite_bounds, implied_overall_theta, solve_beta
from .simulate import sample_max_stable, sample_rv_portfolio
from .tm_lp import DEFAULT_MAX_DIM, DiscreteSpectralMeasure, solve_lower_bound, verify_kkt

log = logging.getLogger("xvar")

DEFAULTS = {
    "seed": 0,
    "q0": DEFAULT_Q0,
    "xi": None,
    "output": None,
    "format": "json",
    "lambda": DEFAULT_LAMBDA,
    "max_dim": DEFAULT_MAX_DIM,
    "years": [10, 100, 1000],
}
ENV_PREFIX = "XVAR_"
_ENV_TYPES = {"seed": int, "q0": float, "xi": float, "output": str, "format": str, "lambda": float, "max_dim": int}
SIG_DIGITS = 6


# -- formatting -------------------------------------------------------------------


def fmt_float(x: float) -> str:
    return f"{x:.{SIG_DIGITS}g}"


def round_floats(obj):
    """Recursively round floats to six significant digits; NaN/inf become None."""
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if not math.isfinite(x):
            return None
        return float(fmt_float(x))
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.ndarray):
        return round_floats(obj.tolist())
    if isinstance(obj, dict):
        return {str(k): round_floats(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [round_floats(v) for v in obj]
    return obj


def dumps(obj) -> str:
    return json.dumps(round_floats(obj), indent=2) + "\n"


def rows_to_csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([fmt_float(v) if isinstance(v, (float, np.floating)) else v for v in r])
    return buf.getvalue()


def emit(text: str, output: str | None) -> None:
    if output in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(output).write_text(text)


# -- settings ---------------------------------------------------------------------


def load_json(path) -> dict:
    try:
        with open(path) as fh:
            return json.load(fh)
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror}") from exc
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from exc


def resolve_settings(args: argparse.Namespace, environ=None) -> dict:
    environ = os.environ if environ is None else environ
    settings = dict(DEFAULTS)
    config = getattr(args, "config", None) or environ.get(ENV_PREFIX + "CONFIG")
    if config:
        data = load_json(config)
        if not isinstance(data, dict):
            raise InputError("config file must hold a flat JSON object")
        for k, v in data.items():
            settings[k.replace("-", "_")] = v
    for key, typ in _ENV_TYPES.items():
        raw = environ.get(ENV_PREFIX + key.upper())
        if raw is not None:
            try:
                settings[key] = typ(raw)
            except ValueError:
                raise InputError(f"{ENV_PREFIX}{key.upper()}={raw!r} is not a valid {typ.__name__}") from None
    for key, val in vars(args).items():
        if val is not None and key not in ("command", "func", "config"):
            settings[key] = val
    if settings["format"] not in ("json", "csv"):
        raise InputError("format must be 'json' or 'csv'")
    return settings


def require_xi(s) -> float:
    if s.get("xi") is None:
        raise InputError("a tail index is required (--xi, XVAR_XI or config)")
    return float(s["xi"])


# -- input helpers --------------------------------------------------------------------


def family_from_obj(obj, strict=True) -> SubsetFamily:
    """Accept a family JSON or the shorthand {"d": d, "theta_d": value}."""
    if "theta" in obj:
        return SubsetFamily.from_json(obj, strict=strict)
    if "theta_d" in obj:
        return SubsetFamily.single_dvariate(int(obj["d"]), float(obj["theta_d"]))
    raise InputError("constraints need a 'theta' map or 'd' with 'theta_d'")


def load_constraints(path) -> SubsetFamily:
    """Read a constraint family; inconsistency is reported before range errors."""
    family = family_from_obj(load_json(path), strict=False)
    _consistent_or_raise(family)
    return family.with_values(family.values, strict=True)


def _consistent_or_raise(family):
    bad = check_consistency(family)
    if bad:
        worst = min(bad, key=lambda v: v.slack)
        raise InconsistentInput(
            f"{len(bad)} consistency inequalities fail (worst J={subset_key(worst.mask) if worst.mask else '[]'}, "
            f"slack {worst.slack:.3g}); run 'xvar calibrate' first"
        )


def family_bounds(family: SubsetFamily, xi: float, method: str = "auto", max_dim: int = DEFAULT_MAX_DIM) -> BoundsResult:
    """Best available bounds on rho for a balanced portfolio.

    The lower bound comes from the closed form (single d-variate family) or
    the TM LP; the upper bound is the closed form in the full-set
    coefficient when present, otherwise the Fréchet upper bound.
    """
    d = family.d
    _consistent_or_raise(family)
    if d == 1:
        return BoundsResult(1.0, 1.0, xi, Method.FRECHET)
    if method == "frechet":
        return frechet_result(d, xi)
    full = full_mask(d)
    if full in family:
        upper, upper_method = upper_bound_U(d, xi, family[full]), Method.CLOSED_FORM_DVARIATE
    else:
        upper, upper_method = float(d) ** (1 / xi), Method.FRECHET
    if method == "auto":
        method = "closed_form" if family.is_single_dvariate() else "tm_lp"
    if method == "closed_form":
        if not family.is_single_dvariate():
            raise InputError("closed_form needs a family with only singletons and the full set")
        return BoundsResult(lower_bound_L(d, xi, family[full]), upper, xi, Method.CLOSED_FORM_DVARIATE)
    if method == "tm_lp":
        res = solve_lower_bound(family, xi, max_dim=max_dim, check=False)
        return BoundsResult(min(res.rho, upper), upper, xi, Method.TM_LP, certificate=res, upper_method=upper_method)
    raise InputError(f"unknown method {method!r}")


# -- commands ---------------------------------------------------------------------------


def cmd_estimate(args, s):
    panel = read_loss_csv(args.csv)
    out = {"d": panel.d, "n": panel.n, "q0": s["q0"], "labels": panel.labels}
    weights = np.ones(panel.d) / panel.d
    if not args.theta_only:
        model = common_xi_fit(panel, s["q0"])
        out.update(model.to_json())
        weights = model.weights
    scaled = panel.scaled(weights)
    raw = estimate_extremal_coeffs(scaled, s["q0"], family=_family_masks(args.family, panel.d), per_asset=args.per_asset)
    out["theta"] = raw.to_json()["theta"]
    if s["format"] == "csv":
        return rows_to_csv(["subset", "theta"], [(k, v) for k, v in out["theta"].items()])
    return dumps(out)


def _family_masks(kind, d):
    if kind == "pairs":
        return default_family_masks(d)
    if kind == "full":
        return [1 << j for j in range(d)] + ([full_mask(d)] if d > 1 else [])
    if kind == "all":
        if d > DEFAULT_MAX_DIM:
            raise InputError(f"--family all needs d <= {DEFAULT_MAX_DIM}")
        return list(range(1, 1 << d))
    raise InputError(f"unknown family kind {kind!r}")


def cmd_calibrate(args, s):
    raw = family_from_obj(load_json(args.constraints), strict=False)
    cal = project_to_consistent(raw, s["lambda"])
    out = cal.to_json()
    out["beta"] = cal.beta.to_json(tol=1e-12)["beta"]
    if s["format"] == "csv":
        return rows_to_csv(["subset", "raw", "calibrated"], [
            (subset_key(m), r, c) for m, r, c in zip(cal.family.masks, raw.values, cal.family.values)
        ])
    return dumps(out)


def cmd_bounds(args, s):
    xi = require_xi(s)
    if args.constraints:
        family = load_constraints(args.constraints)
    elif args.d is not None and args.theta is not None:
        family = SubsetFamily.single_dvariate(args.d, args.theta)
    elif args.d is not None and args.curve:
        family = None
    else:
        raise InputError("give a constraints file or --d with --theta")
    d = family.d if family is not None else args.d
    res = family_bounds(family, xi, args.method, s["max_dim"]) if family is not None else None
    curve = dvariate_curve(d, xi, args.points) if args.curve == "theta" else None
    if s["format"] == "csv":
        if curve is not None:
            return rows_to_csv(["theta", "chi_lower", "chi_upper"], curve.tolist())
        return rows_to_csv(
            ["rho_lower", "rho_upper", "chi_lower", "chi_upper", "method"],
            [(res.rho_lower, res.rho_upper, res.chi_lower, res.chi_upper, Method(res.method).value)],
        )
    out = res.to_json() if res is not None else {"xi": xi}
    if curve is not None:
        out["curve"] = {"theta": curve[:, 0], "chi_lower": curve[:, 1], "chi_upper": curve[:, 2]}
    return dumps(out)


def cmd_tm_lp(args, s):
    xi = require_xi(s)
    family = load_constraints(args.constraints)
    res = solve_lower_bound(family, xi, max_dim=s["max_dim"])
    out = {
        "rho": res.rho,
        "chi": res.chi,
        "xi": xi,
        "beta": res.beta.to_json(tol=1e-12)["beta"],
        "duals": {subset_key(m): y for m, y in zip(family.masks, res.dual)},
        "measure": res.measure.to_json(),
    }
    if args.certify:
        out["kkt"] = verify_kkt(family, xi, res.certificate(), args.samples).to_json()
    if s["format"] == "csv":
        return rows_to_csv(["subset", "beta"], list(out["beta"].items()))
    return dumps(out)


def cmd_sectors(args, s):
    xi = require_xi(s)
    obj = load_json(args.spec)
    if "c0" in obj:
        ci = obj["ci"]
        if "blocks" in obj:
            blocks = obj["blocks"]
        elif "sizes" in obj:
            start, blocks = 1, []
            for size in obj["sizes"]:
                blocks.append(list(range(start, start + size)))
                start += size
        else:
            raise InputError("c0/ci input also needs 'blocks' or 'sizes'")
        beta, thetas = solve_beta(float(obj["c0"]), ci, [len(b) for b in blocks])
        part = SectorPartition.from_json({"blocks": blocks, "beta": beta, "thetas": thetas})
    else:
        part = SectorPartition.from_json(obj)
    res = composite_bounds(part, xi)
    overall = implied_overall_theta(part)
    out = res.to_json()
    out.update(
        {
            "beta": part.beta,
            "thetas": list(part.sector_thetas),
            "blocks": [b.to_json() for b in part.blocks],
            "theta_full": overall,
            "single_constraint": dvariate_bounds(part.d, xi, overall).to_json() if part.d > 1 else None,
        }
    )
    if s["format"] == "csv":
        return rows_to_csv(["rho_lower", "rho_upper", "chi_lower", "chi_upper"], [
            (res.rho_lower, res.rho_upper, res.chi_lower, res.chi_upper)
        ])
    return dumps(out)


def cmd_simulate(args, s):
    obj = load_json(args.measure)
    if "atoms" in obj:
        H = DiscreteSpectralMeasure.from_json(obj)
    else:
        H = solve_lower_bound(family_from_obj(obj), require_xi(s), max_dim=s["max_dim"]).measure
    if args.max_stable:
        X = sample_max_stable(H, args.n, s["seed"], workers=args.workers)
    else:
        X = sample_rv_portfolio(H, require_xi(s), args.n, s["seed"], workers=args.workers)
    panel = LossPanel(X)
    buf = io.StringIO()
    _write_panel(buf, panel)
    return buf.getvalue()


def _write_panel(fh, panel):
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(panel.labels)
    for row in panel.observations:
        w.writerow([f"{v:.10g}" for v in row])


def run_pipeline(panel: LossPanel, s: dict) -> dict:
    """Estimation, calibration, bounds and VaR tables for one loss panel."""
    q0 = s["q0"]
    d = panel.d
    model = common_xi_fit(panel, q0)
    xi = float(s["xi"]) if s.get("xi") is not None else model.xi
    weights = model.weights
    scaled = panel.scaled(weights)
    raw = estimate_extremal_coeffs(scaled, q0)
    report = {
        "d": d,
        "n": panel.n,
        "q0": q0,
        "labels": panel.labels,
        "xi": xi,
        "tail_model": model.to_json(),
        "weights": weights,
        "theta_raw": raw.to_json()["theta"],
    }
    if d == 1:
        report["calibrated"] = {"[1]": 1.0}
        report["bounds"] = {"dvariate": BoundsResult(1.0, 1.0, xi, Method.FRECHET).to_json()}
        chi = {"dvariate_lower": 1.0, "dvariate_upper": 1.0}
    else:
        cal = project_to_consistent(raw, s["lambda"])
        report["calibrated"] = cal.family.to_json()["theta"]
        report["calibration_residual"] = cal.residual
        full = full_mask(d)
        dv = dvariate_bounds(d, xi, cal.family[full])
        bounds = {"dvariate": dv.to_json(), "frechet": frechet_result(d, xi).to_json()}
        chi = {"dvariate_lower": dv.chi_lower, "dvariate_upper": dv.chi_upper}
        if d <= s["max_dim"]:
            pairs = cal.family.restrict([m for m in cal.family.masks if m != full or d == 2])
            lp = solve_lower_bound(pairs, xi, max_dim=s["max_dim"])
            bounds["bivariate_lp"] = {"rho_lower": lp.rho, "chi_lower": lp.chi, "xi": xi, "method": "tm_lp"}
            chi["bivariate_lower"] = lp.chi
        report["bounds"] = bounds
    report["return_levels"] = return_level_bounds(model, chi, s["years"])
    alphas = np.geomspace(min(model.p0, 0.05), max(1.0 / panel.n, 1e-6), 25)
    alphas = alphas[alphas < model.p0]
    report["var_curves"] = var_curves(
        chi,
        alphas,
        model=model,
        baseline_series=scaled.observations[:, 0],
        portfolio_series=scaled.observations.sum(axis=1),
    )
    return report


def cmd_pipeline(args, s):
    panel = read_loss_csv(args.csv)
    report = run_pipeline(panel, s)
    if s["format"] == "csv":
        rows = report["return_levels"]
        keys = list(rows[0])
        return rows_to_csv(keys, [[r[k] for k in keys] for r in rows])
    return dumps(report)


# -- parser ---------------------------------------------------------------------------------


def _global_options(parser, suppress):
    default = argparse.SUPPRESS if suppress else None
    g = parser.add_argument_group("global options")
    g.add_argument("--seed", type=int, default=default, help="random seed (default 0)")
    g.add_argument("--q0", type=float, default=default, help="threshold quantile (default 0.98)")
    g.add_argument("--xi", type=float, default=default, help="tail index")
    g.add_argument("--output", "-o", default=default, help="output file (default stdout)")
    g.add_argument("--format", choices=["json", "csv"], default=default)
    g.add_argument("--config", default=default, help="flat JSON settings file")
    g.add_argument("--lambda", dest="lambda", type=float, default=default, help="calibration ridge parameter")
    g.add_argument("--max-dim", dest="max_dim", type=int, default=default, help="LP dimension cap (<= 20)")
    g.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS if suppress else False)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="xvar", description="Extreme-VaR bounds under extremal-coefficient constraints.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    _global_options(p, suppress=False)
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, func, help_):
        sp = sub.add_parser(name, help=help_)
        _global_options(sp, suppress=True)
        sp.set_defaults(func=func)
        return sp

    sp = add("estimate", cmd_estimate, "fit tails and estimate extremal coefficients from a loss CSV")
    sp.add_argument("csv")
    sp.add_argument("--family", choices=["pairs", "full", "all"], default="pairs")
    sp.add_argument("--per-asset", action="store_true", help="per-column thresholds")
    sp.add_argument("--theta-only", action="store_true", help="skip the GP fit; equal weights")

    sp = add("calibrate", cmd_calibrate, "project raw coefficients onto the valid cone")
    sp.add_argument("constraints")

    sp = add("bounds", cmd_bounds, "bounds on extreme VaR for a constraint family")
    sp.add_argument("constraints", nargs="?")
    sp.add_argument("--d", type=int)
    sp.add_argument("--theta", type=float, help="full-set coefficient (with --d)")
    sp.add_argument("--method", choices=["auto", "closed_form", "tm_lp", "frechet"], default="auto")
    sp.add_argument("--curve", choices=["theta"], help="also emit chi bounds over a theta grid")
    sp.add_argument("--points", type=int, default=200)

    sp = add("tm-lp", cmd_tm_lp, "solve the Tawn-Molchanov LP and report the optimal measure")
    sp.add_argument("constraints")
    sp.add_argument("--certify", action="store_true", help="verify KKT conditions")
    sp.add_argument("--samples", type=int, default=100_000)

    sp = add("sectors", cmd_sectors, "market-plus-sectors bounds")
    sp.add_argument("spec")

    sp = add("simulate", cmd_simulate, "simulate a loss panel from a spectral measure")
    sp.add_argument("measure")
    sp.add_argument("-n", type=int, default=100_000)
    sp.add_argument("--max-stable", action="store_true", help="unit Fréchet max-stable draws")
    sp.add_argument("--workers", type=int, default=1)

    sp = add("pipeline", cmd_pipeline, "full estimation-to-bounds report")
    sp.add_argument("csv")
    return p


def main(argv=None, environ=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    func = args.func
    try:
        s = resolve_settings(args, environ)
        text = func(args, s)
        emit(text, s.get("output"))
    except XvarError as exc:
        print(f"xvar {args.command}: error: {exc}", file=sys.stderr)
        return exc.exit_code
    return 0


def main_entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    main_entry()
