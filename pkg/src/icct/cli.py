"""Command-line interface.

One executable (``icct``) with a subcommand per task: mode generation,
coefficient inspection, ratio tables, exact simulation, estimation from
measurement files, Monte Carlo validation, cutoff scans, Fisher/CRB curves,
the naive-vs-global demo, and the heating-rate fit. Structured results are
JSON on stdout; curve data goes to CSV files with sidecar schema files.
Every output directory receives a manifest describing the run that filled
it.

Exit codes: 0 success, 1 usage error, 2 data error (machine-readable JSON
on stderr).
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import os
import sys
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .coefficients import coefficient_set
from .crystal import (
    ChainConfig,
    ModeSpec,
    chain_modes,
    load_mode_file,
    make_mode_spec,
    mode_from_dict,
    mode_spec_to_dict,
    save_mode_file,
)
from .dynamics import SidebandPropagator, com_dicke_flop, exact_flop, probability_oracle
from .errors import IcctError, NoUsableRecordsError, ValidationError
from .estimators import (
    SidebandRecord,
    bichromatic_crb,
    crb_curves,
    estimate_bichromatic,
    estimate_sideband_ratio,
    fit_estimator,
    single_ion_fisher,
    blue_fisher_zeros,
    weighted_linear_fit,
)
from .ratio import RatioPolynomial, single_ion_bias, single_ion_variance, single_ion_flops
from .sampling import (
    CampaignConfig,
    chain_cutoff_scan,
    cutoff_time,
    naive_vs_global_demo,
    sample_campaign,
    validate_estimator_moments,
)

SUBCOMMANDS = (
    "modes",
    "coeffs",
    "ratio-table",
    "simulate",
    "estimate",
    "fit",
    "bichromatic",
    "montecarlo",
    "cutoff",
    "fisher",
    "crb",
    "demo-naive",
    "heating-fit",
)


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage errors exit 1, not argparse's 2
        raise _UsageError(message)


@dataclass
class RunManifest:
    """Provenance record written next to every output batch."""

    subcommand: str
    argv: list[str]
    inputs: dict[str, str]
    output_dir: str
    seed: int | None
    version: str
    config_hash: str


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    h.update(path.read_bytes())
    return h.hexdigest()


def _write_manifest(out_dir: Path, subcommand: str, argv: list[str], inputs: list[Path],
                    seed: int | None) -> None:
    digest = hashlib.sha256(json.dumps(argv, sort_keys=True).encode()).hexdigest()[:16]
    manifest = RunManifest(
        subcommand=subcommand,
        argv=list(argv),
        inputs={str(p): _sha256(Path(p)) for p in inputs if Path(p).is_file()},
        output_dir=str(out_dir),
        seed=seed,
        version=__version__,
        config_hash=digest,
    )
    (out_dir / "manifest.json").write_text(json.dumps(asdict(manifest), indent=2) + "\n")


def _emit(obj) -> None:
    print(json.dumps(obj, indent=2, default=_jsonable))


def _jsonable(value):
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, (np.floating, np.integer)):
        return value.item()
    raise TypeError(f"not JSON serializable: {type(value)!r}")


def _write_csv(path: Path, columns: dict[str, np.ndarray], schema: dict[str, str]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    names = list(columns)
    rows = zip(*(np.asarray(columns[c]).tolist() for c in names))
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(names)
        writer.writerows(rows)
    schema_path = path.with_suffix(path.suffix + ".schema.json")
    schema_path.write_text(json.dumps({"columns": schema}, indent=2) + "\n")


def _parse_grid(spec: str) -> np.ndarray:
    """Grid spec: 'start:stop:step' (inclusive end within half a step) or a
    comma-separated list of values."""
    if ":" in spec:
        parts = spec.split(":")
        if len(parts) != 3:
            raise ValidationError(f"bad grid spec {spec!r}; expected start:stop:step")
        start, stop, step = (float(p) for p in parts)
        if step <= 0 or stop < start:
            raise ValidationError(f"bad grid spec {spec!r}")
        return np.arange(start, stop + 0.5 * step, step)
    return np.array([float(v) for v in spec.split(",")])


def _resolve_threads(value) -> int:
    if value is not None:
        return max(1, int(value))
    env = os.environ.get("ICCT_THREADS")
    return max(1, int(env)) if env else 1


def _load_measurement(path: str) -> tuple[ModeSpec, list[SidebandRecord], dict]:
    try:
        data = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise ValidationError(f"measurement file not found: {path}")
    except json.JSONDecodeError as exc:
        raise ValidationError(f"measurement file {path}: invalid JSON ({exc})")
    if "mode" not in data:
        raise ValidationError(f"measurement file {path}: missing 'mode' object")
    mode = mode_from_dict(data["mode"], origin=path)
    records = []
    for k, row in enumerate(data.get("records", [])):
        try:
            records.append(
                SidebandRecord(
                    t=float(row["t_s"]),
                    shots_red=int(row["shots_red"]),
                    excited_red=int(row["excited_red"]),
                    shots_blue=int(row["shots_blue"]),
                    excited_blue=int(row["excited_blue"]),
                )
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ValidationError(f"measurement file {path}: record {k} malformed ({exc})")
    return mode, records, data


# ---------------------------------------------------------------------------
# figure-data export (fig2 = naive-vs-global, fig3 = single-ion moments,
# fig4 = chain cutoff scan, fig6 = CRB comparison)

def export_figure_data(which: str, out_dir, **kwargs) -> list[Path]:
    """Write the CSV data behind one of the reproduction figures.

    Returns the list of files written (schema sidecars included alongside).
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if which == "fig2":
        n_ions = int(kwargs.get("n_ions", 19))
        nbar = float(kwargs.get("nbar", 5.0))
        table = naive_vs_global_demo(n_ions, nbar, kwargs.get("gt_grid"))
        path = out / "fig2_naive_vs_global.csv"
        _write_csv(
            path,
            {k: table[k] for k in ("gt", "p_mean_red", "p_mean_blue", "naive_ratio",
                                   "p_global_red", "p_global_blue", "global_inversion")},
            {
                "gt": "dimensionless interrogation time (radians)",
                "p_mean_red": "mean per-ion excitation, red sideband",
                "p_mean_blue": "mean per-ion excitation, blue sideband",
                "naive_ratio": "p_mean_red/(p_mean_blue-p_mean_red)",
                "p_global_red": "global excitation, red sideband",
                "p_global_blue": "global excitation, blue sideband",
                "global_inversion": "temperature from inverting the global ratio (NaN where invalid)",
            },
        )
        return [path]
    if which == "fig3":
        shots = int(kwargs.get("shots", 400))
        gt = np.asarray(kwargs.get("gt_grid") if kwargs.get("gt_grid") is not None
                        else np.linspace(0.05, 2.0 * np.pi, 400))
        paths = []
        for nbar in kwargs.get("nbars", (0.1, 0.5)):
            p_r, p_b = single_ion_flops(nbar, gt)
            ok = (p_b - p_r) > 1e-12
            bias = np.full(gt.size, np.nan)
            unc = np.full(gt.size, np.nan)
            bias[ok] = single_ion_bias(p_r[ok], p_b[ok], shots) * shots
            unc[ok] = np.sqrt(single_ion_variance(p_r[ok], p_b[ok], shots) * shots) / nbar
            path = out / f"fig3_moments_nbar{nbar}.csv"
            _write_csv(
                path,
                {"gt": gt, "p_red": p_r, "p_blue": p_b, "bias_times_N": bias,
                 "rel_uncertainty_times_sqrtN": unc},
                {
                    "gt": "dimensionless interrogation time (radians)",
                    "p_red": "red sideband excitation probability",
                    "p_blue": "blue sideband excitation probability",
                    "bias_times_N": "estimator bias rescaled by the total sample size",
                    "rel_uncertainty_times_sqrtN": "relative uncertainty rescaled by sqrt(sample size)",
                },
            )
            paths.append(path)
        return paths
    if which == "fig4":
        n_range = range(int(kwargs.get("n_min", 4)), int(kwargs.get("n_max", 12)) + 1)
        rows = chain_cutoff_scan(n_range, float(kwargs.get("nbar", 0.1)),
                                 anisotropy=kwargs.get("anisotropy"))
        path = out / "fig4_cutoffs.csv"
        cols = {k: np.array([r[k] for r in rows]) for k in
                ("n_ions", "mode_index", "frequency", "anisotropy", "is_com", "gt_star", "hit_grid_max")}
        cols["gt_star_cycles"] = cols["gt_star"] / (2.0 * np.pi)
        _write_csv(
            path,
            cols,
            {
                "n_ions": "chain size",
                "mode_index": "transverse mode index (ascending frequency)",
                "frequency": "mode frequency in units of the axial trap frequency",
                "anisotropy": "transverse/axial trap frequency ratio used",
                "is_com": "1 if the mode couples all ions with equal magnitude",
                "gt_star": "cutoff time, radians of gt",
                "gt_star_cycles": "cutoff time as gt/2pi",
                "hit_grid_max": "1 if the deviation never exceeded epsilon on the scan grid",
            },
        )
        return [path]
    if which == "fig6":
        mode = kwargs["mode"]
        nbar_grid = np.asarray(kwargs.get("nbar_grid") if kwargs.get("nbar_grid") is not None
                               else np.geomspace(0.02, 3.0, 24))
        table = crb_curves(mode, nbar_grid)
        path = out / "fig6_crb.csv"
        _write_csv(
            path,
            {k: table[k] for k in ("nbar", "estimator", "sideband_crb", "bichromatic_crb",
                                   "cutoff_gt", "estimator_gt", "sideband_crb_gt")},
            {
                "nbar": "true mean phonon number",
                "estimator": "ratio-estimator uncertainty, sqrt(N)*sigma, minimized over gt <= cutoff",
                "sideband_crb": "Cramer-Rao bound of the global two-sideband measurement (sqrt(N)*sigma)",
                "bichromatic_crb": "Cramer-Rao bound of single-ion bichromatic readout (sqrt(N)*sigma)",
                "cutoff_gt": "cutoff time used for the estimator curve (radians)",
                "estimator_gt": "gt minimizing the estimator uncertainty",
                "sideband_crb_gt": "gt maximizing the combined Fisher information",
            },
        )
        return [path]
    raise ValidationError(f"unknown figure key {which!r}; expected fig2, fig3, fig4 or fig6")


# ---------------------------------------------------------------------------
# subcommand implementations

def _cmd_modes(args, argv):
    cfg = ChainConfig(args.n, anisotropy=args.anisotropy, axis=args.axis)
    modes = chain_modes(cfg)
    specs = [make_mode_spec(v, args.g, label=f"{args.axis}{args.n}-mode{i}", frequency=f)
             for i, (f, v) in enumerate(modes)]
    payload = {
        "n_ions": args.n,
        "anisotropy": args.anisotropy,
        "axis": args.axis,
        "modes": [dict(mode_spec_to_dict(s), frequency_axial_units=m[0])
                  for s, m in zip(specs, modes)],
    }
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        for spec in specs:
            save_mode_file(spec, out / f"{spec.label}.json")
        _write_manifest(out, "modes", argv, [], None)
    _emit(payload)
    return 0


def _cmd_coeffs(args, argv):
    mode = load_mode_file(args.mode)
    coeffs = coefficient_set(mode)
    _emit({"label": mode.label, "n_ions": mode.n_ions, "coefficients": coeffs.as_dict()})
    return 0


def _cmd_ratio_table(args, argv):
    mode = load_mode_file(args.mode)
    poly = RatioPolynomial.for_mode(mode)
    gt = np.linspace(0.0, args.gt_max, args.steps)
    r = np.array([poly.value(args.nbar, g) for g in gt])
    cols = {"gt": gt, "ratio": r, "ratio_over_nbar": r / args.nbar if args.nbar > 0 else r}
    schema = {
        "gt": "dimensionless interrogation time (radians)",
        "ratio": "series value of the sideband ratio at the given nbar",
        "ratio_over_nbar": "ratio divided by nbar (relative error of the bare single-ion formula)",
    }
    path = Path(args.csv) if args.csv else None
    if path:
        _write_csv(path, cols, schema)
    _emit({"label": mode.label, "nbar": args.nbar, "gt": gt, "ratio": r,
           "csv": str(path) if path else None})
    return 0


def _cmd_simulate(args, argv):
    mode = load_mode_file(args.mode)
    gt = _parse_grid(args.gt_grid)
    workers = _resolve_threads(args.threads)
    if mode.is_com() and mode.n_ions > 12:
        result = com_dicke_flop(mode.n_ions, args.sideband, args.nbar, gt, tail_tol=args.tail_tol)
    else:
        result = exact_flop(mode, args.sideband, args.nbar, gt, tail_tol=args.tail_tol,
                            workers=workers)
    cols = {"gt": result.gt_grid, "t_s": result.gt_grid / mode.g,
            "p_global": result.p_global, "p_mean": result.p_mean}
    schema = {
        "gt": "dimensionless interrogation time (radians)",
        "t_s": "interrogation time in seconds for this mode's g",
        "p_global": "global excitation probability",
        "p_mean": "mean per-ion excitation probability",
    }
    if args.csv:
        _write_csv(Path(args.csv), cols, schema)
    _emit({"label": mode.label, "nbar": args.nbar, "sideband": args.sideband,
           "gt": result.gt_grid, "p_global": result.p_global, "p_mean": result.p_mean,
           "csv": args.csv})
    return 0


def _rough_cutoff(mode, records) -> float:
    """Default cutoff when none is given: rough temperature from the
    shortest usable record, then the exact-dynamics cutoff scan."""
    usable = [r for r in records if 0 < r.f_red < r.f_blue]
    if not usable:
        raise NoUsableRecordsError("cannot infer a cutoff: no record with 0 < f_r < f_b")
    first = min(usable, key=lambda r: r.t)
    rough = first.f_red / (first.f_blue - first.f_red)
    return cutoff_time(mode, rough).gt_star


def _cmd_estimate(args, argv):
    mode, records, data = _load_measurement(args.data)
    if args.method == "ratio":
        cutoff = args.cutoff_gt if args.cutoff_gt is not None else _rough_cutoff(mode, records)
        report = estimate_sideband_ratio(mode, records, cutoff,
                                         discard_outliers=args.discard_outliers)
        payload = {
            "method": "ratio",
            "label": mode.label,
            "nbar": report.nbar_final,
            "sigma": report.sigma_final,
            "cutoff_gt": report.cutoff_gt,
            "per_time": [
                {"gt": e.gt, "t_s": e.gt / mode.g, "nbar_hat": e.nbar_hat, "bias": e.bias,
                 "sigma": float(np.sqrt(e.variance)),
                 "shots_red": e.sample_sizes[0], "shots_blue": e.sample_sizes[1]}
                for e in report.per_time
            ],
            "discarded": report.discarded,
        }
        if args.csv:
            _write_csv(
                Path(args.csv),
                {
                    "gt": np.array([e.gt for e in report.per_time]),
                    "t_s": np.array([e.gt / mode.g for e in report.per_time]),
                    "nbar_hat": np.array([e.nbar_hat for e in report.per_time]),
                    "bias": np.array([e.bias for e in report.per_time]),
                    "sigma": np.array([np.sqrt(e.variance) for e in report.per_time]),
                },
                {
                    "gt": "dimensionless interrogation time (radians)",
                    "t_s": "interrogation time in seconds",
                    "nbar_hat": "bias-corrected per-time estimate",
                    "bias": "subtracted bias correction",
                    "sigma": "per-time standard deviation",
                },
            )
            payload["csv"] = args.csv
        _emit(payload)
        return 0
    if args.method == "fit":
        result = _run_fit(mode, records, args)
        _emit({"method": "fit", "label": mode.label, "nbar": result.nbar_hat,
               "sigma": float(np.sqrt(result.variance)), "objective": result.objective_at_min,
               "points": result.points_used})
        return 0
    if args.method == "bichromatic":
        section = data.get("bichromatic")
        if not section:
            raise ValidationError(
                "measurement file has no 'bichromatic' section "
                '({"eta_i": x, "records": [{"t_s","shots","excited"}, ...]})'
            )
        rows = [(float(r["t_s"]), float(r["shots"]), float(r["excited"]))
                for r in section["records"]]
        nbar, variance = estimate_bichromatic(float(section["eta_i"]), rows, mode.g)
        _emit({"method": "bichromatic", "label": mode.label, "nbar": nbar,
               "sigma": float(np.sqrt(variance))})
        return 0
    raise ValidationError(f"unknown method {args.method!r}")


def _run_fit(mode, records, args):
    if not records:
        raise NoUsableRecordsError("no records to fit")
    prop = SidebandPropagator(mode, "red",
                              basis="dicke" if mode.is_com() and mode.n_ions > 12 else "auto")

    def model(t, nbar):
        return prop.p_global(max(float(nbar), 0.0), mode.g * np.asarray(t, dtype=float))

    t = np.array([r.t for r in records])
    f = np.array([r.excited_red / r.shots_red for r in records])
    shots = np.array([r.shots_red for r in records], dtype=float)
    smoothed = (np.array([r.excited_red for r in records]) + 0.5) / (shots + 1.0)
    sigma = np.sqrt(smoothed * (1.0 - smoothed) / shots)
    return fit_estimator(model, t, f, sigma, (args.nbar_min, args.nbar_max))


def _cmd_fit(args, argv):
    mode, records, _ = _load_measurement(args.data)
    result = _run_fit(mode, records, args)
    _emit({"method": "fit", "label": mode.label, "nbar": result.nbar_hat,
           "sigma": float(np.sqrt(result.variance)), "objective": result.objective_at_min,
           "points": result.points_used})
    return 0


def _cmd_bichromatic(args, argv):
    try:
        data = json.loads(Path(args.data).read_text())
    except FileNotFoundError:
        raise ValidationError(f"data file not found: {args.data}")
    except json.JSONDecodeError as exc:
        raise ValidationError(f"data file {args.data}: invalid JSON ({exc})")
    rows = [(float(r["t_s"]), float(r["shots"]), float(r["excited"])) for r in data["records"]]
    nbar, variance = estimate_bichromatic(float(data["eta_i"]), rows, float(data["g_rad_per_s"]))
    _emit({"method": "bichromatic", "nbar": nbar, "sigma": float(np.sqrt(variance))})
    return 0


def _cmd_montecarlo(args, argv):
    try:
        raw = json.loads(Path(args.config).read_text())
    except FileNotFoundError:
        raise ValidationError(f"config file not found: {args.config}")
    except json.JSONDecodeError as exc:
        raise ValidationError(f"config {args.config}: invalid JSON ({exc})")
    mode = mode_from_dict(raw["mode"], origin=args.config)
    grid = raw["gt_grid"]
    gt_grid = _parse_grid(grid) if isinstance(grid, str) else np.asarray(grid, dtype=float)
    seed = args.seed if args.seed is not None else int(raw.get("seed", 0))
    config = CampaignConfig(
        mode=mode,
        nbar_true=float(raw["nbar_true"]),
        gt_grid=gt_grid,
        shots_per_sideband=int(raw["shots_per_sideband"]),
        seed=seed,
        trials=int(raw.get("trials", 10000)),
    )
    result = validate_estimator_moments(config)
    payload = {
        "nbar_true": config.nbar_true,
        "trials": result.trials,
        "shots_total": result.shots_total,
        "seed": seed,
        "gt": result.gt_grid,
        "empirical_bias": result.empirical_bias,
        "empirical_variance": result.empirical_variance,
        "predicted_bias": result.predicted_bias,
        "predicted_variance": result.predicted_variance,
        "empirical_bias_corrected": result.empirical_bias_corrected,
        "discarded_fraction": result.discarded_fraction,
    }
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "montecarlo.json").write_text(json.dumps(payload, indent=2, default=_jsonable) + "\n")
        _write_manifest(out, "montecarlo", argv, [Path(args.config)], seed)
    _emit(payload)
    return 0


def _cmd_cutoff(args, argv):
    if args.fig4:
        out = Path(args.out) if args.out else Path("fig4-out")
        paths = export_figure_data("fig4", out, n_min=args.n_min, n_max=args.n_max,
                                   nbar=args.nbar, anisotropy=args.anisotropy)
        _write_manifest(out, "cutoff", argv, [], None)
        _emit({"fig4_csv": [str(p) for p in paths]})
        return 0
    if not args.mode:
        raise ValidationError("cutoff requires --mode (or --fig4)")
    mode = load_mode_file(args.mode)
    res = cutoff_time(mode, args.nbar, args.epsilon, relative=args.epsilon_relative,
                      gt_max=args.gt_max)
    _emit({
        "label": res.mode_label,
        "nbar": res.nbar,
        "epsilon": res.epsilon,
        "relative": res.relative,
        "gt_star": res.gt_star,
        "gt_star_cycles": res.gt_star_cycles,
        "t_star_s": res.gt_star / mode.g,
        "hit_grid_max": res.hit_grid_max,
    })
    return 0


def _cmd_fisher(args, argv):
    gt = np.linspace(0.02, args.gt_max, args.steps)
    f_b, p_b, dp_b = single_ion_fisher(args.nbar, gt, "blue")
    f_r, p_r, dp_r = single_ion_fisher(args.nbar, gt, "red")
    zeros = blue_fisher_zeros(args.nbar, gt_max=args.gt_max)
    payload = {
        "nbar": args.nbar,
        "blue_fisher_zeros_gt": zeros,
        "blue_fisher_zeros_cycles": zeros / (2.0 * np.pi),
    }
    if args.csv:
        _write_csv(
            Path(args.csv),
            {"gt": gt, "fisher_red": f_r, "fisher_blue": f_b,
             "fisher_combined": 0.5 * (f_r + f_b), "p_red": p_r, "p_blue": p_b},
            {
                "gt": "dimensionless interrogation time (radians)",
                "fisher_red": "per-shot Fisher information, red sideband",
                "fisher_blue": "per-shot Fisher information, blue sideband",
                "fisher_combined": "per-shot information with equal sideband split",
                "p_red": "red excitation probability",
                "p_blue": "blue excitation probability",
            },
        )
        payload["csv"] = args.csv
    if args.fig3:
        out = Path(args.fig3)
        paths = export_figure_data("fig3", out, shots=args.shots)
        _write_manifest(out, "fisher", argv, [], None)
        payload["fig3_csv"] = [str(p) for p in paths]
    _emit(payload)
    return 0


def _cmd_crb(args, argv):
    mode = load_mode_file(args.mode)
    nbar_grid = _parse_grid(args.nbar_grid)
    out = Path(args.out) if args.out else None
    table = crb_curves(mode, nbar_grid)
    payload = {k: table[k] for k in table}
    payload["label"] = mode.label
    if out:
        out.mkdir(parents=True, exist_ok=True)
        export_figure_data("fig6", out, mode=mode, nbar_grid=nbar_grid)
        _write_manifest(out, "crb", argv, [Path(args.mode)], None)
        payload["fig6_csv"] = str(out / "fig6_crb.csv")
    _emit(payload)
    return 0


def _cmd_demo_naive(args, argv):
    gt_grid = _parse_grid(args.gt_grid) if args.gt_grid else None
    table = naive_vs_global_demo(args.n, args.nbar, gt_grid)
    payload = {k: table[k] for k in table}
    if args.out:
        out = Path(args.out)
        export_figure_data("fig2", out, n_ions=args.n, nbar=args.nbar, gt_grid=gt_grid)
        _write_manifest(out, "demo-naive", argv, [], None)
        payload["fig2_csv"] = str(out / "fig2_naive_vs_global.csv")
    _emit(payload)
    return 0


def _cmd_heating_fit(args, argv):
    try:
        data = json.loads(Path(args.data).read_text())
    except FileNotFoundError:
        raise ValidationError(f"data file not found: {args.data}")
    except json.JSONDecodeError as exc:
        raise ValidationError(f"data file {args.data}: invalid JSON ({exc})")
    points = data.get("points", [])
    if len(points) < 2:
        raise NoUsableRecordsError("heating fit needs at least two (delay, nbar, sigma) points")
    delays = np.array([float(p["delay_s"]) for p in points])
    nbars = np.array([float(p["nbar"]) for p in points])
    sigmas = np.array([float(p["sigma"]) for p in points])
    fit = weighted_linear_fit(delays, nbars, sigmas)
    _emit({
        "heating_rate_quanta_per_s": fit["slope"],
        "heating_rate_sigma": fit["slope_sigma"],
        "nbar_at_zero_delay": fit["intercept"],
        "intercept_sigma": fit["intercept_sigma"],
        "chi2": fit["chi2"],
        "points": fit["points"],
    })
    return 0


# ---------------------------------------------------------------------------

def _build_parser() -> _Parser:
    parser = _Parser(prog="icct", description="Sideband thermometry of trapped-ion crystals")
    parser.add_argument("--version", action="version", version=f"icct {__version__}")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p = sub.add_parser("modes", help="linear-chain normal modes and mode files")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--anisotropy", type=float, default=6.0)
    p.add_argument("--axis", choices=("axial", "transverse"), default="transverse")
    p.add_argument("--g", type=float, default=1.0, help="sideband Rabi rate rad/s for the mode files")
    p.add_argument("--out", help="directory for one mode file per mode")

    p = sub.add_parser("coeffs", help="mode-dependent ratio-series coefficients")
    p.add_argument("--mode", required=True)

    p = sub.add_parser("ratio-table", help="series ratio vs gt at fixed nbar")
    p.add_argument("--mode", required=True)
    p.add_argument("--nbar", type=float, required=True)
    p.add_argument("--gt-max", type=float, required=True)
    p.add_argument("--steps", type=int, default=121)
    p.add_argument("--csv")

    p = sub.add_parser("simulate", help="exact sideband flop curves")
    p.add_argument("--mode", required=True)
    p.add_argument("--nbar", type=float, required=True)
    p.add_argument("--sideband", choices=("r", "b", "red", "blue"), required=True)
    p.add_argument("--gt-grid", required=True, help="start:stop:step or comma list (radians)")
    p.add_argument("--tail-tol", type=float, default=1e-10)
    p.add_argument("--csv")
    p.add_argument("--threads", type=int)

    p = sub.add_parser("estimate", help="temperature from a measurement file")
    p.add_argument("--data", required=True)
    p.add_argument("--cutoff-gt", type=float)
    p.add_argument("--method", choices=("ratio", "fit", "bichromatic"), default="ratio")
    p.add_argument("--discard-outliers", action="store_true")
    p.add_argument("--nbar-min", type=float, default=1e-4)
    p.add_argument("--nbar-max", type=float, default=5.0)
    p.add_argument("--csv")

    p = sub.add_parser("fit", help="weighted least-squares fit of the red sideband")
    p.add_argument("--data", required=True)
    p.add_argument("--nbar-min", type=float, default=1e-4)
    p.add_argument("--nbar-max", type=float, default=5.0)

    p = sub.add_parser("bichromatic", help="bichromatic contrast-decay estimate")
    p.add_argument("--data", required=True)

    p = sub.add_parser("montecarlo", help="Monte Carlo validation of the moment formulas")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--out")

    p = sub.add_parser("cutoff", help="series-validity cutoff time")
    p.add_argument("--mode")
    p.add_argument("--nbar", type=float, default=0.1)
    p.add_argument("--epsilon", type=float, default=5e-3)
    p.add_argument("--epsilon-relative", action="store_true")
    p.add_argument("--gt-max", type=float, default=0.6 * 2.0 * np.pi)
    p.add_argument("--fig4", action="store_true", help="scan all chain modes N=n-min..n-max")
    p.add_argument("--n-min", type=int, default=4)
    p.add_argument("--n-max", type=int, default=12)
    p.add_argument("--anisotropy", type=float)
    p.add_argument("--out")

    p = sub.add_parser("fisher", help="single-ion Fisher information and moment curves")
    p.add_argument("--nbar", type=float, required=True)
    p.add_argument("--gt-max", type=float, default=5.5)
    p.add_argument("--steps", type=int, default=400)
    p.add_argument("--shots", type=int, default=400)
    p.add_argument("--csv")
    p.add_argument("--fig3", help="directory for the moment-surface CSV export")

    p = sub.add_parser("crb", help="Cramer-Rao comparison curves for a mode")
    p.add_argument("--mode", required=True)
    p.add_argument("--nbar-grid", required=True, help="start:stop:step or comma list")
    p.add_argument("--out")

    p = sub.add_parser("demo-naive", help="naive mean-excitation ratio vs global inversion")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--nbar", type=float, required=True)
    p.add_argument("--gt-grid")
    p.add_argument("--out")

    p = sub.add_parser("heating-fit", help="weighted linear fit of nbar vs delay")
    p.add_argument("--data", required=True)
    return parser


_HANDLERS = {
    "modes": _cmd_modes,
    "coeffs": _cmd_coeffs,
    "ratio-table": _cmd_ratio_table,
    "simulate": _cmd_simulate,
    "estimate": _cmd_estimate,
    "fit": _cmd_fit,
    "bichromatic": _cmd_bichromatic,
    "montecarlo": _cmd_montecarlo,
    "cutoff": _cmd_cutoff,
    "fisher": _cmd_fisher,
    "crb": _cmd_crb,
    "demo-naive": _cmd_demo_naive,
    "heating-fit": _cmd_heating_fit,
}


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    try:
        return _HANDLERS[args.subcommand](args, argv)
    except IcctError as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
