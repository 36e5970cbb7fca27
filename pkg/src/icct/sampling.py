"""Monte Carlo validation, synthetic campaigns, and cutoff times.

Sampling uses a counter-based generator (Philox) keyed by
(seed, campaign/trial, grid index) so that every draw is reproducible
independent of scheduling or vectorization layout.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .crystal import ModeSpec
from .dynamics import SidebandPropagator, probability_oracle
from .errors import ValidationError
from .ratio import RatioPolynomial, single_ion_bias, single_ion_variance, crystal_bias, crystal_variance
from .estimators import SidebandRecord

__all__ = [
    "CampaignConfig",
    "CutoffResult",
    "MomentValidation",
    "sample_campaign",
    "validate_estimator_moments",
    "cutoff_time",
    "naive_vs_global_demo",
    "chain_cutoff_scan",
    "default_cutoff_grid",
]

DEFAULT_EPSILON = 5e-3
# Cutoff scans cover 0.6 cycles of gt/2π in 0.005-cycle steps, refined to
# 1e-4 cycles; gt itself is a phase in radians everywhere in this package.
TWO_PI = 2.0 * np.pi
_CUTOFF_GT_MAX = 0.6 * TWO_PI
_CUTOFF_GT_STEP = 0.005 * TWO_PI
_CUTOFF_REFINE = 1e-4 * TWO_PI


@dataclass(frozen=True)
class CampaignConfig:
    """A synthetic measurement campaign: one mode, fixed truth, seeded draws."""

    mode: ModeSpec
    nbar_true: float
    gt_grid: np.ndarray
    shots_per_sideband: int
    seed: int
    trials: int = 1

    def __post_init__(self):
        grid = np.atleast_1d(np.asarray(self.gt_grid, dtype=float))
        grid.setflags(write=False)
        object.__setattr__(self, "gt_grid", grid)
        if self.nbar_true < 0:
            raise ValidationError("nbar_true must be non-negative")
        if self.shots_per_sideband < 1:
            raise ValidationError("shots_per_sideband must be at least 1")
        if self.trials < 1:
            raise ValidationError("trials must be at least 1")


@dataclass(frozen=True)
class CutoffResult:
    """Largest usable interrogation time for the truncated-ratio inversion.

    ``gt_star`` is a phase in radians; ``gt_star_cycles`` is the same time
    expressed as gt/2π, the unit customary on cutoff plots.
    """

    mode_label: str
    nbar: float
    gt_star: float
    epsilon: float
    relative: bool = False
    hit_grid_max: bool = False

    @property
    def gt_star_cycles(self) -> float:
        return self.gt_star / TWO_PI


@dataclass
class MomentValidation:
    """Empirical vs predicted moments of the raw ratio estimator."""

    gt_grid: np.ndarray
    empirical_bias: np.ndarray
    empirical_variance: np.ndarray
    predicted_bias: np.ndarray
    predicted_variance: np.ndarray
    empirical_bias_corrected: np.ndarray
    discarded_fraction: np.ndarray
    trials: int
    shots_total: int


def _philox(seed: int, *counters: int) -> np.random.Generator:
    cnt = list(counters)[:3] + [0] * (3 - len(counters))
    return np.random.Generator(
        np.random.Philox(key=np.uint64(seed & (2**64 - 1)), counter=[0] + [np.uint64(c) for c in cnt])
    )


def sample_campaign(config: CampaignConfig, oracle, trial: int = 0) -> list[SidebandRecord]:
    """Draw one campaign of binomial sideband records from an exact oracle.

    ``oracle`` is a callable gt → (P_r, P_b) (see
    :func:`icct.dynamics.probability_oracle`). Deterministic in
    (config.seed, trial, grid index).
    """
    p_r, p_b = oracle(config.gt_grid)
    p_r = np.atleast_1d(np.asarray(p_r, dtype=float))
    p_b = np.atleast_1d(np.asarray(p_b, dtype=float))
    if p_r.shape != config.gt_grid.shape or p_b.shape != config.gt_grid.shape:
        raise ValidationError("oracle does not cover the campaign gt grid")
    g = config.mode.g
    shots = config.shots_per_sideband
    records = []
    for k, gt in enumerate(config.gt_grid):
        rng = _philox(config.seed, trial, k)
        er = int(rng.binomial(shots, p_r[k]))
        eb = int(rng.binomial(shots, p_b[k]))
        records.append(
            SidebandRecord(
                t=float(gt / g),
                shots_red=shots,
                excited_red=er,
                shots_blue=shots,
                excited_blue=eb,
            )
        )
    return records


def validate_estimator_moments(config: CampaignConfig, oracle=None) -> MomentValidation:
    """Monte Carlo check of the closed-form bias/variance of the estimator.

    For every grid time, runs the raw ratio estimator (inversion of R_t at
    f_r/(f_b−f_r)) over ``config.trials`` campaigns and compares the
    empirical moments to the delta-method predictions evaluated at the true
    probabilities. Trials with f_r ≥ f_b or failed inversions are discarded
    and counted; f_r = 0 inverts to 0 and is kept.
    """
    if oracle is None:
        oracle = probability_oracle(config.mode, config.nbar_true)
    p_r, p_b = (np.atleast_1d(np.asarray(v, dtype=float)) for v in oracle(config.gt_grid))
    poly = RatioPolynomial.for_mode(config.mode)
    shots = config.shots_per_sideband
    total = 2 * shots
    m = config.gt_grid.size
    emp_bias = np.empty(m)
    emp_var = np.empty(m)
    emp_bias_corr = np.empty(m)
    pred_bias = np.empty(m)
    pred_var = np.empty(m)
    discarded = np.empty(m)
    for k, gt in enumerate(config.gt_grid):
        rng = _philox(config.seed, 0, k)
        er = rng.binomial(shots, p_r[k], size=config.trials)
        eb = rng.binomial(shots, p_b[k], size=config.trials)
        fr = er / shots
        fb = eb / shots
        ok = fb > fr
        r = fr[ok] / (fb[ok] - fr[ok])
        est = poly.invert_many(r, float(gt))
        fin = np.isfinite(est)
        est_f = est[fin]
        discarded[k] = 1.0 - est_f.size / config.trials
        emp_bias[k] = est_f.mean() - config.nbar_true
        emp_var[k] = est_f.var(ddof=1)
        # plug-in bias correction at the estimate, as the pipeline applies it
        rp = poly.derivative(est_f, float(gt))
        rpp = poly.second_derivative(est_f, float(gt))
        corr = crystal_bias(fr[ok][fin], fb[ok][fin], rp, rpp, total)
        emp_bias_corr[k] = np.mean(est_f - corr) - config.nbar_true
        rp_true = poly.derivative(config.nbar_true, float(gt))
        rpp_true = poly.second_derivative(config.nbar_true, float(gt))
        pred_bias[k] = crystal_bias(p_r[k], p_b[k], rp_true, rpp_true, total)
        pred_var[k] = crystal_variance(p_r[k], p_b[k], rp_true, total)
    return MomentValidation(
        gt_grid=np.array(config.gt_grid),
        empirical_bias=emp_bias,
        empirical_variance=emp_var,
        predicted_bias=pred_bias,
        predicted_variance=pred_var,
        empirical_bias_corrected=emp_bias_corr,
        discarded_fraction=discarded,
        trials=config.trials,
        shots_total=total,
    )


def default_cutoff_grid(gt_max: float = _CUTOFF_GT_MAX, step: float = _CUTOFF_GT_STEP) -> np.ndarray:
    return np.arange(step, gt_max + 0.5 * step, step)


def cutoff_time(
    mode,
    nbar: float,
    epsilon: float = DEFAULT_EPSILON,
    *,
    relative: bool = False,
    gt_max: float = _CUTOFF_GT_MAX,
    gt_step: float = _CUTOFF_GT_STEP,
    tail_tol: float = 1e-12,
    oracle=None,
) -> CutoffResult:
    """First interrogation time where the inverted truncated ratio drifts
    from the true n̄ by more than epsilon, refined by bisection to 1e-4.

    Fed with exact (infinite-statistics) probabilities; epsilon is an
    absolute phonon-number deviation unless ``relative`` is set.
    """
    if epsilon <= 0:
        raise ValidationError("epsilon must be positive")
    label = getattr(mode, "label", "")
    if oracle is None:
        oracle = probability_oracle(mode, nbar, tail_tol=tail_tol)
    poly = RatioPolynomial.for_mode(mode)
    scale = abs(nbar) if relative else 1.0
    if relative and nbar == 0:
        raise ValidationError("relative epsilon undefined at nbar = 0")

    def deviation(gt_points) -> np.ndarray:
        p_r, p_b = oracle(np.atleast_1d(gt_points))
        dev = np.empty(np.atleast_1d(gt_points).size)
        for i, (pr, pb, gt) in enumerate(zip(np.atleast_1d(p_r), np.atleast_1d(p_b), np.atleast_1d(gt_points))):
            if not (0 <= pr < pb):
                dev[i] = np.inf
                continue
            r = pr / (pb - pr)
            est = poly.invert_many(np.array([r]), float(gt))[0]
            dev[i] = abs(est - nbar) / scale if np.isfinite(est) else np.inf
        return dev

    grid = default_cutoff_grid(gt_max, gt_step)
    devs = deviation(grid)
    exceeded = np.nonzero(devs > epsilon)[0]
    if exceeded.size == 0:
        return CutoffResult(label, nbar, float(grid[-1]), epsilon, relative, hit_grid_max=True)
    hi_idx = exceeded[0]
    lo = grid[hi_idx - 1] if hi_idx > 0 else 0.0
    hi = grid[hi_idx]
    while hi - lo > _CUTOFF_REFINE:
        mid = 0.5 * (lo + hi)
        if deviation(np.array([mid]))[0] > epsilon:
            hi = mid
        else:
            lo = mid
    return CutoffResult(label, nbar, float(0.5 * (lo + hi)), epsilon, relative)


def naive_vs_global_demo(n_ions: int, nbar: float, gt_grid=None, *, tail_tol: float = 1e-10) -> dict:
    """Side-by-side failure demo for the COM mode of a large crystal.

    Columns: mean per-ion excitations, the naive ratio built from them, and
    the inversion of the global-excitation ratio (NaN beyond the cutoff or
    where inversion fails).
    """
    from .crystal import com_mode

    mode = com_mode(n_ions)
    if gt_grid is None:
        gt_grid = default_cutoff_grid(1.5, 0.01)
    gt = np.atleast_1d(np.asarray(gt_grid, dtype=float))
    props = {}
    for kind in ("red", "blue"):
        props[kind] = SidebandPropagator(mode, kind, basis="dicke", need_vectors=True)
    pmean_r = props["red"].p_mean(nbar, gt, tail_tol)
    pmean_b = props["blue"].p_mean(nbar, gt, tail_tol)
    pglob_r = props["red"].p_global(nbar, gt, tail_tol)
    pglob_b = props["blue"].p_global(nbar, gt, tail_tol)
    with np.errstate(divide="ignore", invalid="ignore"):
        naive = np.where(pmean_b > pmean_r, pmean_r / (pmean_b - pmean_r), np.nan)
    poly = RatioPolynomial.for_mode(mode)
    global_inv = np.full(gt.size, np.nan)
    ok = pglob_b > pglob_r
    r = np.where(ok, pglob_r / np.where(ok, pglob_b - pglob_r, 1.0), np.nan)
    for i in range(gt.size):
        if ok[i]:
            global_inv[i] = poly.invert_many(np.array([r[i]]), float(gt[i]))[0]
    return {
        "gt": gt,
        "p_mean_red": pmean_r,
        "p_mean_blue": pmean_b,
        "naive_ratio": naive,
        "p_global_red": pglob_r,
        "p_global_blue": pglob_b,
        "global_inversion": global_inv,
    }


def chain_cutoff_scan(
    n_ions_range,
    nbar: float = 0.1,
    epsilon: float = DEFAULT_EPSILON,
    *,
    anisotropy=None,
    axis: str = "transverse",
    gt_max: float = _CUTOFF_GT_MAX,
) -> list[dict]:
    """Cutoff times of every chain mode for a range of crystal sizes.

    ``anisotropy`` may be a number, a callable N → value, or None for the
    default 1.5× the zigzag-critical value (a generic stable trap).
    """
    from .crystal import ChainConfig, chain_modes, critical_anisotropy, make_mode_spec

    rows = []
    for n in n_ions_range:
        if anisotropy is None:
            a = 1.5 * critical_anisotropy(n) if axis == "transverse" else 6.0
            a = max(a, 1.5)
        elif callable(anisotropy):
            a = float(anisotropy(n))
        else:
            a = float(anisotropy)
        modes = chain_modes(ChainConfig(n, anisotropy=a, axis=axis))
        for idx, (freq, vec) in enumerate(modes):
            spec = make_mode_spec(vec, 1.0, label=f"N{n}-mode{idx}")
            res = cutoff_time(spec, nbar, epsilon, gt_max=gt_max)
            rows.append(
                {
                    "n_ions": n,
                    "mode_index": idx,
                    "frequency": freq,
                    "anisotropy": a,
                    "is_com": spec.is_com(),
                    "gt_star": res.gt_star,
                    "hit_grid_max": res.hit_grid_max,
                }
            )
    return rows
