"""Experiment orchestration: config parsing, the prediction pipeline, CLT
comparison and identity reports.

Config files are INI-style with sections [model], [simulation], [suite] and
optionally [derivative] and [identities]; unknown sections or keys are errors.
"""

from __future__ import annotations

import configparser
import csv
import hashlib
import io
import itertools
import json
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .cavity import DEFAULT_ORDER, RSOrderParams, fixed_point_residual, solve_fixed_point
from .constants import (
    IdentityError,
    SpinConstants,
    UncertifiedRegimeError,
    compute_spin_constants,
    predict_covariance,
)
from .gaussian import (
    MomentSpec,
    build_TkSk_coefficients,
    build_TS_coefficients,
    isserlis_mixed_moment,
    recursion_path,
)
from .model import ModelParams
from .simulator import (
    LinearForm,
    ProductObservable,
    SimPlan,
    SimulationData,
    centered_observable,
    estimate_centered_moment,
    estimate_nu,
    simulate,
)

DEFAULT_SUITE = (
    "(1,2):2",
    "(1,1):2",
    "(1,2):1,(1,3):1",
    "(1,2):1,(3,4):1",
    "(1,2):1,(1,1):1",
    "(1,2):1,(3,3):1",
    "(1,2):4",
    "(1,1):4",
    "(1,2):2,(1,1):2",
)

_SCHEMA = {
    "model": {"beta": float, "h": float, "D": float, "S": int},
    "simulation": {
        "N_grid": "ints",
        "n_replicas": int,
        "sweeps_burn": int,
        "sweeps_measure": int,
        "thin": int,
        "n_disorder": int,
        "master_seed": int,
        "quadrature_order": int,
    },
    "suite": {"specs": "specs"},
    "derivative": {"N": int, "n": int, "t_values": "floats", "n_disorder": int, "seed": int, "step": float},
    "identities": {"betas": "floats", "hs": "floats", "Ds": "floats", "Ss": "ints"},
}


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    params: ModelParams
    plan: SimPlan
    specs: tuple = DEFAULT_SUITE
    quadrature_order: int = DEFAULT_ORDER
    derivative: dict = field(default_factory=dict)
    identities: dict = field(default_factory=dict)
    text: str = ""

    @property
    def config_hash(self) -> str:
        return hashlib.sha256(canonical_config(self).encode()).hexdigest()

    def moment_specs(self) -> list:
        return [MomentSpec.parse(s) for s in self.specs]


def _convert(kind, raw: str, where: str):
    try:
        if kind == "ints":
            return tuple(int(x) for x in raw.replace(";", ",").split(",") if x.strip())
        if kind == "floats":
            return tuple(float(x) for x in raw.replace(";", ",").split(",") if x.strip())
        if kind == "specs":
            return tuple(x.strip() for x in raw.replace("\n", ";").split(";") if x.strip())
        return kind(raw)
    except ValueError as exc:
        raise ConfigError(f"{where}: cannot parse {raw!r}: {exc}") from None


def parse_config(text: str, seed: int | None = None, quadrature_order: int | None = None) -> ExperimentConfig:
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from None
    values: dict = {}
    for section in cp.sections():
        if section not in _SCHEMA:
            raise ConfigError(f"unknown section [{section}]")
        values[section] = {}
        for key, raw in cp.items(section):
            if key not in _SCHEMA[section]:
                raise ConfigError(f"unknown key '{key}' in [{section}]")
            values[section][key] = _convert(_SCHEMA[section][key], raw, f"[{section}] {key}")
    model = values.get("model", {})
    missing = {"beta", "h", "D"} - set(model)
    if missing:
        raise ConfigError(f"[model] is missing {sorted(missing)}")
    params = ModelParams(model["beta"], model["h"], model["D"], model.get("S", 1))
    sim = dict(values.get("simulation", {}))
    order = sim.pop("quadrature_order", DEFAULT_ORDER)
    if quadrature_order is not None:
        order = quadrature_order
    if seed is not None:
        sim["master_seed"] = seed
    sim.setdefault("N_grid", (200,))
    try:
        plan = SimPlan(params, **sim)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    specs = values.get("suite", {}).get("specs", DEFAULT_SUITE)
    for s in specs:
        try:
            MomentSpec.parse(s)
        except ValueError as exc:
            raise ConfigError(f"[suite] bad spec {s!r}: {exc}") from None
    return ExperimentConfig(
        params, plan, tuple(specs), int(order), values.get("derivative", {}), values.get("identities", {}), text
    )


def load_config(path, seed: int | None = None, quadrature_order: int | None = None) -> ExperimentConfig:
    with open(path) as fh:
        return parse_config(fh.read(), seed, quadrature_order)


def canonical_config(cfg: ExperimentConfig) -> str:
    """Normalised rendering used for hashing."""
    plan = cfg.plan
    out = {
        "model": cfg.params.as_dict(),
        "simulation": {
            "N_grid": list(plan.N_grid),
            "n_replicas": plan.n_replicas,
            "sweeps_burn": plan.sweeps_burn,
            "sweeps_measure": plan.sweeps_measure,
            "thin": plan.thin,
            "n_disorder": plan.n_disorder,
            "master_seed": plan.master_seed,
            "quadrature_order": cfg.quadrature_order,
        },
        "suite": list(cfg.specs),
        "derivative": {k: list(v) if isinstance(v, tuple) else v for k, v in sorted(cfg.derivative.items())},
        "identities": {k: list(v) for k, v in sorted(cfg.identities.items())},
    }
    return json.dumps(out, sort_keys=True)


# ---------------------------------------------------------------------------
# serialisation


def _fmt(x):
    if isinstance(x, bool) or x is None:
        return json.dumps(x)
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if math.isnan(x) or math.isinf(x):
            return json.dumps(str(x))
        return format(x, ".17g")
    if isinstance(x, str):
        return json.dumps(x)
    if isinstance(x, dict):
        return "{" + ", ".join(f"{json.dumps(str(k))}: {_fmt(v)}" for k, v in x.items()) + "}"
    if isinstance(x, (list, tuple)):
        return "[" + ", ".join(_fmt(v) for v in x) + "]"
    raise TypeError(f"cannot serialise {type(x)}")


def dumps(obj) -> str:
    """JSON with floats written to 17 significant digits; key order preserved."""
    return _pretty(obj) + "\n"


def _pretty(obj, indent: int = 0) -> str:
    pad = "  " * (indent + 1)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        body = ",\n".join(f"{pad}{json.dumps(str(k))}: {_pretty(v, indent + 1)}" for k, v in obj.items())
        return "{\n" + body + "\n" + "  " * indent + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        if all(not isinstance(v, (dict, list, tuple)) for v in obj):
            return _fmt(obj)
        body = ",\n".join(pad + _pretty(v, indent + 1) for v in obj)
        return "[\n" + body + "\n" + "  " * indent + "]"
    return _fmt(obj)


# ---------------------------------------------------------------------------
# pipeline pieces


def model_summary(params: ModelParams, order: int = DEFAULT_ORDER) -> tuple[dict, RSOrderParams]:
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        rs = solve_fixed_point(params, order=order)
    res = fixed_point_residual(params, rs, order)
    return {
        "params": params.as_dict(),
        "certified": params.high_temperature_certified,
        "certification_bound": params.certification_bound,
        "fixed_point": {"q": rs.q, "p": rs.p, "residual_q": res[0], "residual_p": res[1]},
        "warnings": [str(w.message) for w in caught],
    }, rs


def constants_report(params: ModelParams, order: int = DEFAULT_ORDER) -> dict:
    summary, rs = model_summary(params, order)
    c = compute_spin_constants(params, rs, order)
    summary["constants"] = {k: v for k, v in c.as_dict().items() if k not in ("q", "p", "beta")}
    summary["identity_residuals"] = c.identity_residuals()
    summary["positivity"] = c.positivity(params.S)
    return summary


def covariance_report(params: ModelParams, N_grid, order: int = DEFAULT_ORDER) -> dict:
    summary, rs = model_summary(params, order)
    c = compute_spin_constants(params, rs, order)
    out = []
    for N in N_grid:
        cm = predict_covariance(c, N)
        out.append({"N": int(N), **{k: v for k, v in cm.as_dict().items() if k != "N"}, "psd": cm.is_psd()})
    summary["covariance"] = out
    summary["covariance_times_N"] = {k: v for k, v in predict_covariance(c, 1).as_dict().items() if k != "N"}
    return summary


def recursion_report(params: ModelParams, N: int = 1, order: int = DEFAULT_ORDER, tol: float = 1e-10) -> dict:
    """Consistency sides and both routes to the second-order constants.

    With the default N = 1 all quantities are the N-independent products
    N * (constant); agreement is required to ``tol`` relative to max(|value|, 1).
    """
    _, rs = model_summary(params, order)
    c = compute_spin_constants(params, rs, order)
    cm = predict_covariance(c, N)
    rk = build_TkSk_coefficients(c, cm, N)
    rt = build_TS_coefficients(c, cm, N)
    out = {"N": N, "params": params.as_dict()}
    ok = True
    for name, rc in (("TkSk", rk), ("TS", rt)):
        lhs, rhs = rc.consistency_sides()
        scale = max(abs(lhs), abs(rhs), 1e-300)
        passed = abs(lhs - rhs) <= tol * max(scale, 1.0)
        ok &= passed
        out[f"consistency_{name}"] = {"lhs": lhs, "rhs": rhs, "rel_diff": abs(lhs - rhs) / scale, "pass": passed}
    path = recursion_path(c, cm, N, tol=1.0)
    rows = {}
    for key, val in path.items():
        closed = getattr(cm, key)
        rel = abs(val - closed) / max(abs(closed), 1e-300) if closed != val else 0.0
        passed = abs(val - closed) <= tol * max(abs(closed), 1.0)
        ok &= passed
        rows[key] = {"recursion": val, "closed_form": closed, "rel_diff": rel, "pass": passed}
    out["constants"] = rows
    out["pass"] = bool(ok)
    return out


INFORMATIONAL_SIGNS = ("F - 3G in [0, 4S^4]",)


def default_identity_grid(cfg_identities: dict | None = None) -> list[ModelParams]:
    cfg_identities = cfg_identities or {}
    Ss = cfg_identities.get("Ss", (1, 2))
    hs = cfg_identities.get("hs", (0.0, 0.3, 0.8))
    Ds = cfg_identities.get("Ds", (-0.3, 0.2))
    fracs = (0.0, 0.4, 0.9)
    betas = cfg_identities.get("betas")
    grid = []
    for S in Ss:
        bs = betas if betas is not None else tuple(f / (2 * S * S) for f in fracs)
        for b, h, D in itertools.product(bs, hs, Ds):
            grid.append(ModelParams(b, h, D, S))
    return grid


def identity_check(params: ModelParams, N: int = 100, order: int = DEFAULT_ORDER, tol: float = 1e-11, constants: SpinConstants | None = None) -> dict:
    """Identity suite, the T12 identity, PSD blocks and the dual path at one point."""
    _, rs = model_summary(params, order)
    c = constants if constants is not None else compute_spin_constants(params, rs, order, check=False)
    res = c.identity_residuals()
    checks = {name: {"residual": r, "pass": abs(r) <= tol} for name, r in res.items()}
    try:
        cm = predict_covariance(c, N)
    except UncertifiedRegimeError as exc:
        checks["certified"] = {"pass": False, "error": str(exc)}
        return {"params": params.as_dict(), "checks": checks, "pass": False}
    r = params.beta**2 * cm.A2sq + 1.0 / N - 1.0 / (N * c.M3)
    checks["b^2 A2sq + 1/N = 1/(N M3)"] = {"residual": r, "pass": abs(r) <= tol}
    checks["PSD blocks"] = {"pass": cm.is_psd()}
    signs = c.positivity(params.S)
    for name, ok in signs.items():
        # F - 3G turns negative once the field polarises the spin (m2 < 3 m1^2
        # at beta = 0), so it is reported but not enforced; M1 > 0 still is
        if name not in INFORMATIONAL_SIGNS:
            checks[f"positivity {name}"] = {"pass": bool(ok)}
    rec = recursion_report(params, N, order) if params.beta > 0 else None
    if rec is not None:
        checks["recursion dual path"] = {"pass": rec["pass"]}
    out = {
        "params": params.as_dict(),
        "M": {"M1": c.M1, "M2": c.M2, "M3": c.M3, "M": c.M},
        "checks": checks,
        "sign_conditions": {k: bool(v) for k, v in signs.items()},
    }
    out["pass"] = all(v["pass"] for v in checks.values())
    return out


def check_identities(cfg: ExperimentConfig | None = None, N: int = 100, constants_override=None) -> dict:
    grid = default_identity_grid(cfg.identities if cfg else None)
    order = cfg.quadrature_order if cfg else DEFAULT_ORDER
    points = []
    for params in grid:
        over = constants_override(params) if constants_override else None
        points.append(identity_check(params, N, order, constants=over))
    failed = sorted({name for p in points for name, v in p["checks"].items() if not v["pass"]})
    return {"n_points": len(points), "points": points, "failed": failed, "pass": not failed}


# ---------------------------------------------------------------------------
# CLT experiment


OBSERVABLE_COLUMNS = ["N", "observable_id", "estimate", "std_error", "n_disorder", "n_thermal", "wall_seconds"]


def simulate_rows(cfg: ExperimentConfig, threads: int = 1, data_by_N=None, progress=None) -> tuple[list, dict]:
    """Run the simulation for every N and produce CSV rows of scaled moments."""
    _, rs = model_summary(cfg.params, cfg.quadrature_order)
    rows, datas = [], {}
    for N in cfg.plan.N_grid:
        data = data_by_N[N] if data_by_N and N in data_by_N else simulate(cfg.plan, N, threads, progress)
        datas[N] = data
        for label, obs in (
            ("R12", ProductObservable((LinearForm.overlap(1, 2),))),
            ("R11", ProductObservable((LinearForm.overlap(1, 1),))),
        ):
            est = estimate_nu(data, obs)
            rows.append([N, label, est.value, est.std_error, est.n_disorder, est.n_thermal, data.wall_seconds])
        for s in cfg.moment_specs():
            if max(max(k) for k in s.m) > data.n_replicas:
                continue
            est = estimate_centered_moment(data, s, rs)
            rows.append([N, s.label(), est.value, est.std_error, est.n_disorder, est.n_thermal, data.wall_seconds])
    return rows, datas


def rows_to_csv(rows, columns=OBSERVABLE_COLUMNS) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([format(x, ".17g") if isinstance(x, float) else x for x in r])
    return buf.getvalue()


def loglog_slope(Ns, diffs) -> float:
    x = np.log(np.asarray(Ns, dtype=float))
    y = np.log(np.maximum(np.abs(np.asarray(diffs, dtype=float)), 1e-300))
    return float(np.polyfit(x, y, 1)[0])


def concentration_check(data: SimulationData, rs: RSOrderParams, S: int) -> dict:
    """nu((R12 - q)^2) <= 16 S^2 / N and nu((R11 - p)^2) <= 16 S^4 / N, with 3 SE slack."""
    out = {}
    for label, spec, bound in (
        ("(R12-q)^2", {(1, 2): 2}, 16 * S**2 / data.N),
        ("(R11-p)^2", {(1, 1): 2}, 16 * S**4 / data.N),
    ):
        est = estimate_nu(data, centered_observable(MomentSpec.from_pairs(spec), rs))
        out[label] = {
            "estimate": est.value,
            "std_error": est.std_error,
            "bound": bound,
            "pass": est.value <= bound + 3 * est.std_error,
        }
    return out


def run_clt_experiment(cfg: ExperimentConfig, threads: int = 1, data_by_N=None, progress=None) -> tuple[dict, dict]:
    """Empirical scaled moments vs Isserlis predictions over the N grid."""
    summary, rs = model_summary(cfg.params, cfg.quadrature_order)
    c = compute_spin_constants(cfg.params, rs, cfg.quadrature_order)
    cm1 = predict_covariance(c, 1)  # N * covariance, N-independent
    specs = cfg.moment_specs()
    rows, per_spec, datas, conc = [], {}, {}, {}
    for N in cfg.plan.N_grid:
        data = data_by_N[N] if data_by_N and N in data_by_N else simulate(cfg.plan, N, threads, progress)
        datas[N] = data
        conc[str(N)] = concentration_check(data, rs, cfg.params.S)
        for s in specs:
            pred = isserlis_mixed_moment(cm1, s) if s.total else 1.0
            est = estimate_centered_moment(data, s, rs)
            z = est.z(pred)
            rows.append(
                {
                    "N": N,
                    "spec": s.label(),
                    "empirical": est.value,
                    "std_error": est.std_error,
                    "predicted": pred,
                    "z": z,
                    "n_disorder": est.n_disorder,
                    "n_thermal": est.n_thermal,
                }
            )
            per_spec.setdefault(s.label(), []).append((N, est.value - pred))
    n_ok = sum(abs(r["z"]) <= 3 for r in rows)
    frac = n_ok / len(rows) if rows else 1.0
    slopes = {}
    if len(cfg.plan.N_grid) >= 2:
        for label, pts in per_spec.items():
            Ns, diffs = zip(*pts)
            slopes[label] = loglog_slope(Ns, diffs)
        # pooled fit with a separate intercept per spec
        xs, ys = [], []
        for pts in per_spec.values():
            Ns, diffs = zip(*pts)
            lx = np.log(np.asarray(Ns, float))
            ly = np.log(np.maximum(np.abs(diffs), 1e-300))
            xs.append(lx - lx.mean())
            ys.append(ly - ly.mean())
        x, y = np.concatenate(xs), np.concatenate(ys)
        pooled = float(x @ y / (x @ x))
    else:
        pooled = float("nan")
    report = {
        "config_hash": cfg.config_hash,
        **summary,
        "constants": {k: v for k, v in c.as_dict().items() if k not in ("q", "p", "beta")},
        "covariance_times_N": {k: v for k, v in cm1.as_dict().items() if k != "N"},
        "rows": rows,
        "concentration": conc,
        "fraction_within_3se": frac,
        "loglog_slopes": slopes,
        "pooled_loglog_slope": pooled,
        "pass_z": frac >= 0.95,
        "pass_slope": bool(pooled < 0),
    }
    report["pass"] = report["pass_z"] and report["pass_slope"]
    if not cfg.params.high_temperature_certified:
        report["warning"] = "parameters outside the certified regime beta < 1/(2 S^2)"
    return report, datas


def clt_rows_csv(report: dict) -> str:
    cols = ["N", "spec", "empirical", "std_error", "predicted", "z", "n_disorder", "n_thermal"]
    return rows_to_csv([[r[c] for c in cols] for r in report["rows"]], cols)


__all__ = [
    "ConfigError",
    "DEFAULT_SUITE",
    "ExperimentConfig",
    "IdentityError",
    "check_identities",
    "clt_rows_csv",
    "concentration_check",
    "constants_report",
    "covariance_report",
    "dumps",
    "load_config",
    "parse_config",
    "recursion_report",
    "run_clt_experiment",
    "simulate_rows",
]
