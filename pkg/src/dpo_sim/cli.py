"""Command-line front end: tables, spectra, P(n), ensembles, validation and figure data.

Every command writes CSV files into ``--out`` (a directory). Each file starts
with a comment header holding the resolved scenario, seed, toolkit version
and the command line that regenerates it.

Exit codes: 0 success, 1 validation failure, 2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import logging
import math
import sys
import warnings
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path
from typing import Sequence

import numpy as np
import yaml

from . import __version__, analytic, photon_stats
from .estimators import (
    EstimationError,
    cavity_moments_from_corr,
    ensemble_correlations,
    equal_time_output_moments,
    spectrum_from_correlation,
)
from .io import correlation_to_csv, distribution_to_csv, spectrum_to_csv, write_csv
from .params import DivergenceError, DpoParams, Regime, classify_regime
from .photon_stats import UnphysicalStateError
from .sde import TransientOnlyError, simulate_ensemble

log = logging.getLogger("dpo_sim")

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2

FIGURE2_R = (0.0, 0.5, 0.75, 1.0)
FIGURE4_EPSILON = (0.1, 0.2, 0.3, 0.399)
SWEEP_VARIABLES = ("epsilon", "r", "omega")
VARIANTS = {"derived": "derived-consistent", "printed": "as-printed"}


class UsageError(Exception):
    pass


@dataclass(frozen=True)
class Sweep:
    variable: str
    start: float
    stop: float
    count: int

    def values(self) -> np.ndarray:
        return np.linspace(self.start, self.stop, self.count)


@dataclass(frozen=True)
class Scenario:
    kappa: float = 0.8
    epsilon: float = 0.2
    r: float = 0.0
    ntraj: int = 2000
    dt: float | None = None
    tend: float | None = None
    seed: int = 1
    out: str = "."
    variant: str = "derived"
    field: str = "output"
    sweep_variable: str | None = None
    sweep_min: float | None = None
    sweep_max: float | None = None
    sweep_count: int | None = None
    transient: bool = False

    @property
    def params(self) -> DpoParams:
        return DpoParams(self.kappa, self.epsilon, self.r)

    @property
    def sweep(self) -> Sweep | None:
        if self.sweep_variable is None:
            return None
        return Sweep(self.sweep_variable, self.sweep_min, self.sweep_max, self.sweep_count)

    @property
    def power_variant(self) -> str:
        return VARIANTS[self.variant]

    def header(self, command: str, **extra) -> dict:
        meta = {"command": command}
        meta.update({k: v for k, v in asdict(self).items() if v is not None and k != "out"})
        meta.update(extra)
        meta["rerun"] = rerun_line(command, self)
        return meta


CONFIG_KEYS = {f.name for f in fields(Scenario)}


def rerun_line(command: str, sc: Scenario) -> str:
    parts = ["python -m dpo_sim", *command.split()]
    for f in fields(Scenario):
        value = getattr(sc, f.name)
        if value is None or f.name in ("out", "transient"):
            continue
        if f.name.startswith("sweep_"):
            continue
        parts += [f"--{f.name}", repr(value) if isinstance(value, float) else str(value)]
    if sc.sweep is not None:
        s = sc.sweep
        parts += ["--sweep", s.variable, repr(float(s.start)), repr(float(s.stop)), str(s.count)]
    if sc.transient:
        parts.append("--transient")
    return " ".join(parts)


def load_config(path: str) -> dict:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from exc
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise UsageError(f"config {path} is not valid YAML/JSON: {exc}") from exc
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise UsageError(f"config {path} must be a flat key-value mapping")
    unknown = sorted(set(data) - CONFIG_KEYS)
    if unknown:
        raise UsageError(f"unknown config keys {unknown}; allowed: {sorted(CONFIG_KEYS)}")
    for key, value in data.items():
        if isinstance(value, (dict, list)):
            raise UsageError(f"config key {key!r} must be a scalar")
    return data


def _as_bool(value) -> bool:
    if isinstance(value, bool):
        return value
    text = str(value).strip().lower()
    if text in ("true", "yes", "1"):
        return True
    if text in ("false", "no", "0"):
        return False
    raise ValueError(value)


def _coerce(values: dict) -> dict:
    casts = {
        "kappa": float, "epsilon": float, "r": float, "dt": float, "tend": float,
        "sweep_min": float, "sweep_max": float, "ntraj": int, "seed": int, "sweep_count": int,
        "out": str, "variant": str, "field": str, "sweep_variable": str, "transient": _as_bool,
    }
    out = {}
    for key, value in values.items():
        if value is None:
            out[key] = None
            continue
        try:
            out[key] = casts[key](value)
        except (TypeError, ValueError) as exc:
            raise UsageError(f"bad value for {key}: {value!r}") from exc
    return out


def build_scenario(args: argparse.Namespace) -> Scenario:
    values = load_config(args.config) if args.config else {}
    for key in CONFIG_KEYS:
        flag = getattr(args, key, None)
        if flag is not None:
            values[key] = flag
    if getattr(args, "sweep", None):
        var, lo, hi, count = args.sweep
        values.update(sweep_variable=var, sweep_min=lo, sweep_max=hi, sweep_count=count)
    values = _coerce(values)
    if values.get("variant", "derived") not in VARIANTS:
        raise UsageError(f"variant must be one of {sorted(VARIANTS)}")
    if values.get("field", "output") not in ("output", "cavity"):
        raise UsageError("field must be 'output' or 'cavity'")
    sweep_keys = ("sweep_variable", "sweep_min", "sweep_max", "sweep_count")
    given = [values.get(k) is not None for k in sweep_keys]
    if any(given) and not all(given):
        raise UsageError(f"a sweep needs all of {sweep_keys}")
    if values.get("sweep_variable") not in (None, *SWEEP_VARIABLES):
        raise UsageError(f"sweep variable must be one of {SWEEP_VARIABLES}")
    if values.get("sweep_count") is not None and values["sweep_count"] < 1:
        raise UsageError("sweep count must be >= 1")
    if values.get("ntraj") is not None and values["ntraj"] < 1:
        raise UsageError("ntraj must be >= 1")
    for key in ("dt", "tend"):
        if values.get(key) is not None and not values[key] > 0:
            raise UsageError(f"{key} must be > 0")
    sc = Scenario(**values)
    try:
        sc.params
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    return sc


def _out(sc: Scenario, name: str) -> Path:
    return Path(sc.out) / name


def _below_threshold_values(sc: Scenario, values: np.ndarray) -> np.ndarray:
    """Drop sweep points at or above threshold with a warning."""
    if sc.sweep.variable != "epsilon":
        return values
    keep = np.array([classify_regime(sc.params.replace(epsilon=float(e))) is Regime.BELOW for e in values])
    if not keep.all():
        warnings.warn(
            f"sweep truncated: {int((~keep).sum())} epsilon values at or above threshold kappa/2={sc.kappa / 2}",
            stacklevel=2,
        )
    return values[keep]


# -- analytic tables --------------------------------------------------------

TABLE_COLUMNS = [
    "epsilon", "r", "n_cavity", "alpha2_cavity", "n_output", "alpha2_output",
    "var_plus_cavity", "var_minus_cavity", "var_plus_output", "var_minus_output",
]


def table_row(p: DpoParams) -> list[float]:
    cav = analytic.cavity_moments_ss(p)
    out = analytic.output_moments_ss(p)
    vc = analytic.quadrature_variances(p, "cavity")
    vo = analytic.quadrature_variances(p, "output")
    return [
        p.epsilon, p.r, cav.mean_photon, cav.anomalous, out.mean_photon, out.anomalous,
        vc.var_plus, vc.var_minus, vo.var_plus, vo.var_minus,
    ]


def cmd_analytic(sc: Scenario, command: str = "analytic") -> list[Path]:
    points = [sc.params]
    if sc.sweep is not None:
        if sc.sweep.variable == "omega":
            raise UsageError("the analytic table sweeps epsilon or r, not omega")
        values = _below_threshold_values(sc, sc.sweep.values())
        points = [sc.params.replace(**{sc.sweep.variable: float(x)}) for x in values]
    for p in points:
        if classify_regime(p) is not Regime.BELOW:
            raise DivergenceError(f"steady-state tables need epsilon < kappa/2, got {p}")
    rows = [table_row(p) for p in points]
    return [write_csv(_out(sc, "analytic.csv"), TABLE_COLUMNS, rows, sc.header(command))]


# -- spectra ---------------------------------------------------------------


def _omega_grid(sc: Scenario) -> np.ndarray:
    if sc.sweep is not None and sc.sweep.variable == "omega":
        return sc.sweep.values()
    return analytic.default_grid()


def cmd_spectrum(sc: Scenario, command: str = "spectrum") -> list[Path]:
    p = sc.params
    w = _omega_grid(sc)
    paths = []
    for sign in ("minus", "plus"):
        if sign == "plus" and p.regime is not Regime.BELOW:
            continue
        curve = analytic.squeezing_spectrum_out(p, w, sign)
        paths.append(spectrum_to_csv(curve, _out(sc, f"squeezing_{sign}.csv"), sc.header(command)))
    if p.regime is Regime.BELOW:
        cav = analytic.power_spectrum(p, w, field_label="cavity")
        derived = analytic.power_spectrum(p, w, variant="derived-consistent")
        printed = analytic.power_spectrum(p, w, variant="as-printed")
        rows = zip(w.tolist(), cav.values.tolist(), derived.values.tolist(), printed.values.tolist())
        paths.append(
            write_csv(
                _out(sc, "power.csv"),
                ["omega", "cavity", "output_derived", "output_printed"],
                rows,
                sc.header(command, output_floor=p.n_res),
            )
        )
    else:
        warnings.warn("power spectra diverge at the critical point; only S_out- was written", stacklevel=2)
    return paths


# -- photon statistics -----------------------------------------------------


def cmd_pnd(sc: Scenario, command: str = "pnd") -> list[Path]:
    p = sc.params
    if classify_regime(p) is not Regime.BELOW:
        raise DivergenceError("P(n) needs a below-threshold steady state")
    mom = analytic.moments(p, sc.field)
    dist = photon_stats.photon_number_distribution(photon_stats.gaussian_state(mom))
    meta = sc.header(command, mean_photon=mom.mean_photon, anomalous=mom.anomalous)
    return [distribution_to_csv(dist, _out(sc, f"pnd_{sc.field}.csv"), meta)]


# -- simulation ------------------------------------------------------------


def _sim_settings(sc: Scenario) -> dict[str, float]:
    p = sc.params
    dt = sc.dt if sc.dt is not None else 0.01 / p.kappa
    lam = p.lambda_plus
    if lam == 0.0 or p.regime is Regime.ABOVE:
        if sc.tend is None:
            raise UsageError("--tend is required at or above threshold")
        return {"dt": dt, "t_end": sc.tend}
    discard = 10.0 / lam
    t_end = sc.tend if sc.tend is not None else discard + 100.0 / lam
    return {"dt": dt, "t_end": t_end, "discard": discard, "max_lag": min(20.0 / lam, 0.5 * (t_end - discard))}


def cmd_simulate(sc: Scenario, command: str = "simulate") -> list[Path]:
    p = sc.params
    s = _sim_settings(sc)
    if p.regime is not Regime.BELOW:
        return _simulate_transient(sc, s, command)
    if s["t_end"] - s["discard"] <= s["max_lag"]:
        raise UsageError(f"--tend must exceed the transient discard {s['discard']:.4g} plus max_lag")
    ec = ensemble_correlations(p, sc.ntraj, s["dt"], s["t_end"], sc.seed, s["max_lag"], s["discard"])
    meta = sc.header(command, dt_used=s["dt"], t_end_used=s["t_end"], discard=s["discard"], max_lag=s["max_lag"])
    paths = []
    for kind in ("cavity-quadrature-plus", "cavity-quadrature-minus", "output-quadrature-plus",
                 "output-quadrature-minus", "cavity-power", "output-power"):
        corr = ec.by_kind(kind)
        paths.append(correlation_to_csv(corr, _out(sc, f"corr_{kind}.csv"), meta))
    cav = cavity_moments_from_corr(ec.cavity_plus, ec.cavity_minus)
    rows = [
        ["n_cavity", cav.mean_photon, cav.se_mean_photon, analytic.cavity_moments_ss(p).mean_photon],
        ["alpha2_cavity", cav.anomalous, cav.se_anomalous, analytic.cavity_moments_ss(p).anomalous],
        ["cross_uv", ec.cross_uv.value, ec.cross_uv.std_err, 0.0],
    ]
    try:
        out = equal_time_output_moments(ec.output_plus, ec.output_minus, p)
        ref = analytic.output_moments_ss(p)
        rows += [
            ["n_output", out.mean_photon, out.se_mean_photon, ref.mean_photon],
            ["alpha2_output", out.anomalous, out.se_anomalous, ref.anomalous],
        ]
    except EstimationError as exc:
        log.warning("output moments not estimated: %s", exc)
    rows = [[name, float(a), float(b), float(c)] for name, a, b, c in rows]
    paths.append(write_csv(_out(sc, "summary.csv"), ["quantity", "estimate", "stderr", "analytic"], rows, meta))
    w = _omega_grid(sc)
    for kind, floor in (("output-quadrature-minus", math.exp(-2 * p.r)), ("output-power", p.n_res)):
        try:
            curve = spectrum_from_correlation(ec.by_kind(kind), w, floor)
        except EstimationError as exc:
            log.warning("%s spectrum not estimated: %s", kind, exc)
            continue
        rows = zip(w.tolist(), curve.values.tolist(), curve.meta["std_errs"].tolist())
        paths.append(write_csv(_out(sc, f"spectrum_{kind}.csv"), ["omega", "value", "stderr"], rows, meta))
    return paths


def _simulate_transient(sc: Scenario, s: dict, command: str) -> list[Path]:
    p = sc.params
    ens = simulate_ensemble(p, sc.ntraj, s["dt"], s["t_end"], sc.seed, allow_transient=sc.transient)
    u2 = (ens.u**2).mean(axis=0)
    v2 = (ens.v**2).mean(axis=0)
    stride = max(1, ens.n_steps // 1000)
    rows = zip(ens.times[::stride].tolist(), u2[::stride].tolist(), v2[::stride].tolist())
    meta = sc.header(command, dt_used=s["dt"], t_end_used=s["t_end"], regime=p.regime.value)
    return [write_csv(_out(sc, "transient.csv"), ["t", "u2", "v2"], rows, meta)]


# -- validation ------------------------------------------------------------


def cmd_validate(sc: Scenario, command: str = "validate", fault: str | None = None, acceptance: bool = False) -> int:
    from . import validation

    if acceptance:
        results = []
        with validation.injected_fault(fault):
            for crit in validation.acceptance_criteria():
                results += validation._timed(crit.run)
    else:
        results = validation.run_scenario_checks(
            sc.params, n_traj=sc.ntraj, seed=sc.seed, dt=sc.dt, variant=sc.power_variant, fault=fault
        )
    for res in results:
        print(res.line())
    rows = [[r.name, "pass" if r.passed else "fail", r.measured, r.target, r.tolerance, r.detail] for r in results]
    write_csv(
        _out(sc, "validation.csv"),
        ["check", "status", "measured", "target", "tolerance", "detail"],
        ([n, s, float(m), float(t), float(tol), d] for n, s, m, t, tol, d in rows),
        sc.header(command, fault=fault or "none", acceptance=acceptance),
    )
    failed = sum(not r.passed for r in results)
    print(f"{len(results) - failed}/{len(results)} checks passed")
    return EXIT_FAIL if failed else EXIT_OK


# -- figures ---------------------------------------------------------------


def _epsilon_grid(count: int = 400) -> np.ndarray:
    return np.linspace(0.0, 0.399, count)


def cmd_figure(sc: Scenario, number: int) -> list[Path]:
    command = f"figure {number}"
    if number in (1, 3):
        sc = replace(sc, kappa=0.8, r=0.75)
        rows = [table_row(DpoParams(0.8, float(e), 0.75)) for e in _epsilon_grid()]
        if number == 1:
            cols = ["epsilon", "n_cavity", "n_output"]
            data = [[row[0], row[2], row[4]] for row in rows]
        else:
            cols = ["epsilon", "var_minus_cavity", "var_minus_output"]
            data = [[row[0], row[7], row[9]] for row in rows]
        return [write_csv(_out(sc, f"figure{number}.csv"), cols, data, sc.header(command, kappa_fixed=0.8))]
    if number == 2:
        sc = replace(sc, kappa=0.8)
        data = []
        for r in FIGURE2_R:
            for e in _epsilon_grid():
                row = table_row(DpoParams(0.8, float(e), r))
                data.append([row[1], row[0], row[2], row[4]])
        meta = sc.header(command, r_values=list(FIGURE2_R), r_values_note="chosen; the r set is not stated")
        return [write_csv(_out(sc, "figure2.csv"), ["r", "epsilon", "n_cavity", "n_output"], data, meta)]
    if number == 4:
        w = _omega_grid(sc)
        cols = ["omega"] + [f"S_minus_eps{e}" for e in FIGURE4_EPSILON]
        curves = [analytic.squeezing_spectrum_out(DpoParams(sc.kappa, e, sc.r), w).values for e in FIGURE4_EPSILON]
        data = [[float(wi)] + [float(c[i]) for c in curves] for i, wi in enumerate(w)]
        meta = sc.header(command, epsilon_values=list(FIGURE4_EPSILON), epsilon_values_note="chosen; the set is not stated")
        return [write_csv(_out(sc, "figure4.csv"), cols, data, meta)]
    if number == 5:
        sc = replace(sc, kappa=0.8, r=0.5, epsilon=0.2)
        return [_rename(p, f"figure5_{p.name}") for p in cmd_spectrum(sc, command)]
    raise UsageError(f"figure must be 1..5, got {number}")


def _rename(path: Path, name: str) -> Path:
    target = path.with_name(name)
    path.replace(target)
    return target


# -- argument parsing ------------------------------------------------------


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--kappa", type=float)
    p.add_argument("--epsilon", type=float)
    p.add_argument("--r", type=float)
    p.add_argument("--ntraj", type=int)
    p.add_argument("--dt", type=float)
    p.add_argument("--tend", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", type=str, help="output directory (default: current directory)")
    p.add_argument("--variant", choices=sorted(VARIANTS), help="output power-spectrum numerator")
    p.add_argument("--field", choices=("output", "cavity"), help="field for pnd (default output)")
    p.add_argument("--config", type=str, help="flat YAML/JSON key-value file; flags override it")
    p.add_argument(
        "--sweep", nargs=4, metavar=("VAR", "MIN", "MAX", "COUNT"),
        help=f"sweep VAR in {SWEEP_VARIABLES} over MIN..MAX with COUNT points",
    )
    p.add_argument("--transient", action="store_const", const=True, help="allow a finite-time run above threshold")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dpo-sim", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"dpo_sim {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, text in (
        ("analytic", "steady-state moments and variances (optionally over a sweep)"),
        ("spectrum", "squeezing and power spectra on a frequency grid"),
        ("pnd", "photon-number distribution"),
        ("simulate", "trajectory ensemble: correlations, moments and spectra"),
    ):
        _add_common(sub.add_parser(name, help=text))
    val = sub.add_parser("validate", help="cross-check closed forms, Fock reference, ensemble and P(n)")
    _add_common(val)
    val.add_argument("--acceptance", action="store_true", help="run the full acceptance campaign")
    val.add_argument("--inject-fault", dest="fault", help=argparse.SUPPRESS)
    fig = sub.add_parser("figure", help="figure data as CSV")
    fig.add_argument("number", type=int, choices=range(1, 6))
    _add_common(fig)
    return parser


def _parse_sweep(args: argparse.Namespace) -> None:
    if not getattr(args, "sweep", None):
        return
    var, lo, hi, count = args.sweep
    try:
        args.sweep = (var, float(lo), float(hi), int(count))
    except ValueError as exc:
        raise UsageError(f"bad --sweep values: {args.sweep}") from exc


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        _parse_sweep(args)
        sc = build_scenario(args)
        if args.command == "validate":
            command = "validate --acceptance" if args.acceptance else "validate"
            return cmd_validate(sc, command, fault=args.fault, acceptance=args.acceptance)
        if args.command == "figure":
            paths = cmd_figure(sc, args.number)
        else:
            paths = {"analytic": cmd_analytic, "spectrum": cmd_spectrum, "pnd": cmd_pnd, "simulate": cmd_simulate}[
                args.command
            ](sc)
    except (UsageError, DivergenceError, TransientOnlyError, UnphysicalStateError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    for path in paths:
        print(path)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
