"""Temperature estimators and their statistical machinery.

Three estimation routes are implemented:

* the crystal sideband-ratio pipeline: per-time inversion of the ratio
  polynomial with plug-in bias correction and inverse-variance combination,
* a weighted least-squares fit of red-sideband excitation curves against an
  exact-dynamics model, with an F-quantile confidence interval,
* the maximum-likelihood bichromatic-contrast estimator for single-ion
  readout,

plus the two-outcome Fisher information and the Cramér-Rao comparison
curves used to judge them.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.optimize
import scipy.stats

from .dynamics import SidebandPropagator, bichromatic_excitation
from .errors import (
    BracketEdgeError,
    NoUsableRecordsError,
    UninformativeDataError,
    ValidationError,
)
from .ratio import EstimateAtTime, RatioPolynomial, ratio_moments, thermal_nmax, thermal_pn

__all__ = [
    "SidebandRecord",
    "EstimateReport",
    "FitResult",
    "estimate_sideband_ratio",
    "weighted_mean",
    "fit_estimator",
    "estimate_bichromatic",
    "fisher_binary",
    "cramer_rao_bound",
    "single_ion_fisher",
    "blue_fisher_zeros",
    "bichromatic_crb",
    "crb_curves",
    "weighted_linear_fit",
]


@dataclass(frozen=True)
class SidebandRecord:
    """Shot counts for one interrogation time on both sidebands."""

    t: float
    shots_red: int
    excited_red: int
    shots_blue: int
    excited_blue: int

    def __post_init__(self):
        if self.t < 0:
            raise ValidationError("interrogation time must be non-negative")
        for shots, excited, name in (
            (self.shots_red, self.excited_red, "red"),
            (self.shots_blue, self.excited_blue, "blue"),
        ):
            if shots <= 0:
                raise ValidationError(f"shots_{name} must be positive")
            if not 0 <= excited <= shots:
                raise ValidationError(f"excited_{name} must lie in [0, shots_{name}]")

    @property
    def f_red(self) -> float:
        return self.excited_red / self.shots_red

    @property
    def f_blue(self) -> float:
        return self.excited_blue / self.shots_blue


@dataclass
class EstimateReport:
    """Per-time estimates and their inverse-variance combination."""

    per_time: list[EstimateAtTime]
    nbar_final: float
    sigma_final: float
    discarded: list[dict]
    cutoff_gt: float


@dataclass(frozen=True)
class FitResult:
    """Weighted least-squares fit outcome."""

    nbar_hat: float
    variance: float
    objective_at_min: float
    points_used: int


def weighted_mean(values, sigmas) -> tuple[float, float]:
    """Inverse-variance weighted mean; the closed form of the quadratic
    argmin Σ(x−xᵢ)²/σᵢ²."""
    values = np.asarray(values, dtype=float)
    sigmas = np.asarray(sigmas, dtype=float)
    if values.size == 0:
        raise NoUsableRecordsError("weighted mean of zero values")
    if np.any(sigmas <= 0):
        raise ValidationError("sigmas must be positive")
    w = 1.0 / sigmas**2
    return float(np.sum(w * values) / np.sum(w)), float(1.0 / np.sqrt(np.sum(w)))


def estimate_sideband_ratio(
    mode,
    records,
    cutoff_gt: float,
    *,
    discard_outliers: bool = False,
) -> EstimateReport:
    """Crystal sideband-ratio estimate from a set of measurement records.

    Records beyond the cutoff or with f_r ≥ f_b (or zero red counts) are
    discarded with a reason, never clamped. Each surviving record is
    inverted through the ratio polynomial, bias-corrected by the plug-in
    delta-method shift, and combined by the inverse-variance mean.

    The combination weights are computed in two passes: a first pass with
    variances at the measured frequencies fixes a preliminary mean, and the
    final weights re-evaluate the variance at that common estimate
    (P_r reconstructed from the measured f_b and the ratio polynomial).
    Weights taken directly at each record's own fluctuating frequencies
    correlate with the estimates and drag the weighted mean down by several
    times the quoted uncertainty at few-hundred-shot statistics.

    ``discard_outliers`` optionally drops points farther than one of their
    own sigmas from the all-point mean.
    """
    poly = RatioPolynomial.for_mode(mode)
    g = mode.g
    per_time: list[EstimateAtTime] = []
    kept_records: list[SidebandRecord] = []
    discarded: list[dict] = []

    def drop(idx, rec, reason):
        discarded.append({"index": idx, "t_s": rec.t, "reason": reason})

    for idx, rec in enumerate(records):
        gt = g * rec.t
        if gt > cutoff_gt:
            drop(idx, rec, f"gt = {gt:.4g} beyond cutoff {cutoff_gt:.4g}")
            continue
        f_r, f_b = rec.f_red, rec.f_blue
        if f_r <= 0.0:
            drop(idx, rec, "no red-sideband excitation (f_r = 0)")
            continue
        if f_r >= f_b:
            drop(idx, rec, f"f_r = {f_r:.4g} >= f_b = {f_b:.4g}")
            continue
        r = f_r / (f_b - f_r)
        try:
            raw = poly.invert(r, gt)
        except Exception as exc:  # NoAdmissibleRoot / AmbiguousRoot
            drop(idx, rec, f"inversion failed: {exc}")
            continue
        rp = float(poly.derivative(raw, gt))
        rpp = float(poly.second_derivative(raw, gt))
        shift, var_r = ratio_moments(f_r, f_b, rec.shots_red, rec.shots_blue)
        bias = float(shift / rp - 0.5 * var_r * rpp / rp**3)
        variance = float(var_r / rp**2)
        per_time.append(
            EstimateAtTime(
                gt=float(gt),
                nbar_hat=raw - bias,
                bias=bias,
                variance=variance,
                sample_sizes=(rec.shots_red, rec.shots_blue),
            )
        )
        kept_records.append(rec)
    if not per_time:
        raise NoUsableRecordsError(
            f"no usable records below cutoff gt = {cutoff_gt} ({len(discarded)} discarded)"
        )
    # second weighting pass at the common preliminary estimate
    prelim, _ = weighted_mean([e.nbar_hat for e in per_time], [np.sqrt(e.variance) for e in per_time])
    nb0 = max(prelim, 0.0)
    refreshed = []
    for e, rec in zip(per_time, kept_records):
        r0 = float(poly.value(nb0, e.gt))
        p_r_star = rec.f_blue * r0 / (1.0 + r0)
        variance = e.variance
        if 0.0 < p_r_star < rec.f_blue:
            rp0 = float(poly.derivative(nb0, e.gt))
            _, var_r = ratio_moments(p_r_star, rec.f_blue, rec.shots_red, rec.shots_blue)
            v2 = float(var_r / rp0**2)
            if v2 > 0:
                variance = v2
        refreshed.append(
            EstimateAtTime(e.gt, e.nbar_hat, e.bias, variance, e.sample_sizes)
        )
    per_time = refreshed
    kept = per_time
    if discard_outliers and len(per_time) > 1:
        mean_all, _ = weighted_mean(
            [e.nbar_hat for e in per_time], [np.sqrt(e.variance) for e in per_time]
        )
        kept = [e for e in per_time if abs(e.nbar_hat - mean_all) <= np.sqrt(e.variance)]
        kept_ids = {id(e) for e in kept}
        for e in per_time:
            if id(e) not in kept_ids:
                discarded.append(
                    {"index": None, "t_s": e.gt / g, "reason": "outside 1 sigma of the all-point mean"}
                )
        if not kept:
            raise NoUsableRecordsError("outlier pass removed every record")
    nbar_final, sigma_final = weighted_mean(
        [e.nbar_hat for e in kept], [np.sqrt(e.variance) for e in kept]
    )
    return EstimateReport(
        per_time=per_time,
        nbar_final=nbar_final,
        sigma_final=sigma_final,
        discarded=discarded,
        cutoff_gt=float(cutoff_gt),
    )


# ---------------------------------------------------------------------------
# weighted least-squares fit estimator

def fit_estimator(
    model,
    t,
    values,
    sigmas,
    nbar_bracket: tuple[float, float],
    *,
    beta: float = 0.317,
    derivative_step: float = 1e-4,
) -> FitResult:
    """Fit n̄ by weighted least squares of a probability-curve model.

    ``model(t, nbar)`` must be vectorized over t. The variance follows the
    standard non-linear WLS recipe: S_L = S(n̂)(1 + F(1, m−1, 1−β)/(m−1))
    with the F-distribution quantile, and the sensitivity A_i = ∂model/∂n̄
    taken by central differences.
    """
    t = np.asarray(t, dtype=float)
    values = np.asarray(values, dtype=float)
    sigmas = np.asarray(sigmas, dtype=float)
    if t.size < 2:
        raise ValidationError("fit requires at least 2 points")
    if np.any(sigmas <= 0):
        raise ValidationError("sigmas must be positive")
    lo, hi = map(float, nbar_bracket)
    if not lo < hi:
        raise ValidationError("nbar_bracket must be an increasing interval")

    def objective(nbar):
        return float(np.sum(((model(t, nbar) - values) / sigmas) ** 2))

    res = scipy.optimize.minimize_scalar(
        objective, bounds=(lo, hi), method="bounded", options={"xatol": 1e-10}
    )
    nhat = float(res.x)
    span = hi - lo
    if min(nhat - lo, hi - nhat) < 1e-5 * span:
        raise BracketEdgeError(
            f"fit minimum at bracket edge (nbar = {nhat:.6g} in [{lo}, {hi}]); widen the bracket"
        )
    s_min = objective(nhat)
    m = t.size
    h = derivative_step * (1.0 + nhat)
    grad = (model(t, nhat + h) - model(t, nhat - h)) / (2.0 * h)
    denom = float(np.sum((grad / sigmas) ** 2))
    if denom <= 0:
        raise UninformativeDataError("model insensitive to nbar at the fitted value")
    f_quantile = float(scipy.stats.f.ppf(1.0 - beta, 1, m - 1))
    variance = s_min * f_quantile / (m - 1) / denom
    return FitResult(nbar_hat=nhat, variance=float(variance), objective_at_min=s_min, points_used=m)


# ---------------------------------------------------------------------------
# bichromatic maximum-likelihood estimator

def estimate_bichromatic(eta_i: float, records, g: float) -> tuple[float, float]:
    """Maximum-likelihood fit of the bichromatic contrast decay.

    ``records`` is a sequence of (t_s, shots, excited) for one readout ion
    with coupling η_i; the single fitted parameter is n̄ through the decay
    rate 2(gtη)²(2n̄+1). Returns (n̄̂, observed-information variance).
    """
    if eta_i == 0:
        raise ValidationError("eta_i must be non-zero")
    arr = np.asarray(records, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 3:
        raise ValidationError("records must be rows of (t_s, shots, excited)")
    t, shots, excited = arr.T
    if np.any(shots <= 0) or np.any(excited < 0) or np.any(excited > shots):
        raise ValidationError("invalid counts in bichromatic records")
    if float(np.sum(excited)) == 0.0:
        raise UninformativeDataError("all-zero excitation counts carry no temperature signal")

    gt = g * t

    def loglike(nbar):
        # smooth in nbar also slightly below 0 (needed for the central
        # second difference at a boundary estimate); clip only against log(0)
        p = 0.5 * (1.0 - np.exp(-2.0 * (gt * eta_i) ** 2 * (2.0 * nbar + 1.0)))
        p = np.clip(p, 1e-300, 0.5)
        return float(np.sum(excited * np.log(p) + (shots - excited) * np.log1p(-p)))

    hi = 4.0
    while True:
        res = scipy.optimize.minimize_scalar(
            lambda x: -loglike(x), bounds=(0.0, hi), method="bounded", options={"xatol": 1e-10}
        )
        nhat = float(res.x)
        if nhat < 0.75 * hi:
            break
        hi *= 4.0
        if hi > 4096.0:
            raise UninformativeDataError(
                "likelihood keeps increasing with nbar (excitation stuck at one half?)"
            )
    if nhat < 1e-8 and loglike(0.0) >= loglike(nhat):
        nhat = 0.0
    h = 1e-5 * (1.0 + nhat)
    info = -(loglike(nhat + h) - 2.0 * loglike(nhat) + loglike(nhat - h)) / h**2
    if not np.isfinite(info) or info <= 0:
        raise UninformativeDataError("observed information non-positive at the estimate")
    return nhat, float(1.0 / info)


# ---------------------------------------------------------------------------
# Fisher information and Cramér-Rao comparisons

def fisher_binary(p: float, dpdn: float):
    """Per-shot Fisher information of a binary outcome: (dP/dn̄)²(1/P + 1/(1−P))."""
    p = np.asarray(p, dtype=float)
    dpdn = np.asarray(dpdn, dtype=float)
    if np.any(p <= 0.0) or np.any(p >= 1.0):
        raise ValidationError("degenerate outcome probability (need 0 < P < 1)")
    return dpdn**2 * (1.0 / p + 1.0 / (1.0 - p))


def cramer_rao_bound(fisher: float, n_measurements: float) -> float:
    """Variance lower bound 1/(N·F)."""
    if fisher <= 0 or n_measurements <= 0:
        raise ValidationError("fisher information and sample size must be positive")
    return 1.0 / (n_measurements * fisher)


def _thermal_dp(nbar: float, n: np.ndarray) -> np.ndarray:
    """d p_n / d n̄ of the thermal occupation, exact for n̄ ≥ 0."""
    dp = np.empty(n.size)
    dp[0] = -1.0 / (nbar + 1.0) ** 2
    if n.size > 1:
        k = n[1:].astype(float)
        if nbar == 0.0:
            dp[1:] = np.where(k == 1.0, 1.0, 0.0)
        else:
            dp[1:] = nbar ** (k - 1.0) * (k - nbar) / (nbar + 1.0) ** (k + 2.0)
    return dp


def single_ion_fisher(nbar: float, gt, sideband="blue", *, tail_tol: float = 1e-12):
    """Per-shot Fisher information of one sideband measurement on one ion,
    from the analytic thermal-derivative sums."""
    gt = np.asarray(gt, dtype=float)
    n_max = thermal_nmax(max(nbar, 1e-6), tail_tol)
    n = np.arange(0, n_max + 1)
    p = thermal_pn(nbar, n)
    dp = _thermal_dp(nbar, n)
    from .dynamics import SidebandKind

    kind = SidebandKind.parse(sideband)
    if kind is SidebandKind.BLUE:
        s = np.sin(gt[..., None] * np.sqrt(n + 1.0)) ** 2
        prob = s @ p
        dprob = s @ dp
    else:
        s = np.sin(gt[..., None] * np.sqrt(np.maximum(n, 1))) ** 2
        s[..., 0] = 0.0
        prob = s @ p
        dprob = s @ dp
    prob = np.clip(prob, 1e-300, 1.0 - 1e-16)
    return dprob**2 * (1.0 / prob + 1.0 / (1.0 - prob)), prob, dprob


def blue_fisher_zeros(nbar: float, gt_max: float = 5.5, scan_points: int = 4000) -> np.ndarray:
    """Zeros of the blue-sideband Fisher information in gt, by sign-change
    scan of dP_b/dn̄ refined with Brent's method."""
    grid = np.linspace(1e-4, gt_max, scan_points)
    _, _, dprob = single_ion_fisher(nbar, grid, "blue")

    def f(gt):
        return float(single_ion_fisher(nbar, np.array([gt]), "blue")[2][0])

    roots = []
    for i in range(grid.size - 1):
        if dprob[i] == 0.0:
            roots.append(float(grid[i]))
        elif dprob[i] * dprob[i + 1] < 0:
            roots.append(float(scipy.optimize.brentq(f, grid[i], grid[i + 1], xtol=1e-12)))
    return np.asarray(roots)


_BICHRO_PEAK = None


def _bichro_peak() -> float:
    """max_y y²/(e^y − 1), the per-shot information peak of the contrast decay."""
    global _BICHRO_PEAK
    if _BICHRO_PEAK is None:
        y = scipy.optimize.brentq(lambda y: 2.0 * (np.exp(y) - 1.0) - y * np.exp(y), 1.0, 2.0)
        _BICHRO_PEAK = y**2 / (np.exp(y) - 1.0)
    return _BICHRO_PEAK


def bichromatic_crb(nbar) -> np.ndarray:
    """Time-optimized Cramér-Rao bound of the bichromatic estimator, as
    √N̄·Δn̄ (independent of η and of the crystal size)."""
    nbar = np.asarray(nbar, dtype=float)
    return (2.0 * nbar + 1.0) / np.sqrt(_bichro_peak())


def crb_curves(
    mode,
    nbar_grid,
    *,
    epsilon: float = 5e-3,
    gt_max_crb: float = 3.2,
    crb_points: int = 160,
    estimator_points: int = 120,
    dn: float = 1e-4,
    tail_tol: float = 1e-12,
    basis: str = "auto",
) -> dict:
    """√N̄-normalized uncertainty curves vs temperature.

    Per temperature: the ratio-estimator uncertainty minimized over gt up to
    the cutoff, the sideband Cramér-Rao bound (global red+blue measurement,
    equal split, central-difference derivatives of the exact excitation)
    minimized over gt freely, and the analytic bichromatic bound.
    """
    from .sampling import cutoff_time

    nbar_grid = np.atleast_1d(np.asarray(nbar_grid, dtype=float))
    props = {k: SidebandPropagator(mode, k, basis=basis) for k in ("red", "blue")}
    poly = RatioPolynomial.for_mode(mode)

    est = np.empty(nbar_grid.size)
    est_gt = np.empty(nbar_grid.size)
    crb = np.empty(nbar_grid.size)
    crb_gt = np.empty(nbar_grid.size)
    cutoffs = np.empty(nbar_grid.size)

    for i, nb in enumerate(nbar_grid):

        def oracle(gt, nb=nb):
            return (
                props["red"].p_global(nb, gt, tail_tol),
                props["blue"].p_global(nb, gt, tail_tol),
            )

        cut = cutoff_time(mode, nb, epsilon, oracle=oracle).gt_star
        cutoffs[i] = cut
        grid = np.linspace(cut / estimator_points, cut, estimator_points)
        pr, pb = oracle(grid)
        ok = (pr > 0) & (pb - pr > 1e-12) & (pb < 1)
        rp = np.array([poly.derivative(nb, g) for g in grid])
        _, var = ratio_moments(pr[ok], pb[ok], 0.5, 0.5)  # per total shot: N/2 each
        sig = np.sqrt(var / rp[ok] ** 2)
        est[i] = float(np.min(sig))
        est_gt[i] = float(grid[ok][np.argmin(sig)])

        grid_c = np.linspace(gt_max_crb / crb_points, gt_max_crb, crb_points)
        pr_hi, pb_hi = (
            props["red"].p_global(nb + dn, grid_c, tail_tol),
            props["blue"].p_global(nb + dn, grid_c, tail_tol),
        )
        lo = max(nb - dn, 0.0)
        pr_lo, pb_lo = (
            props["red"].p_global(lo, grid_c, tail_tol),
            props["blue"].p_global(lo, grid_c, tail_tol),
        )
        pr0, pb0 = oracle(grid_c)
        dpr = (pr_hi - pr_lo) / (nb + dn - lo)
        dpb = (pb_hi - pb_lo) / (nb + dn - lo)
        okc = (pr0 > 1e-14) & (pr0 < 1 - 1e-14) & (pb0 > 1e-14) & (pb0 < 1 - 1e-14)
        f_r = fisher_binary(pr0[okc], dpr[okc])
        f_b = fisher_binary(pb0[okc], dpb[okc])
        total = 0.5 * (f_r + f_b)  # equal split of shots between sidebands
        crb[i] = float(np.min(1.0 / np.sqrt(total)))
        crb_gt[i] = float(grid_c[okc][np.argmax(total)])
    return {
        "nbar": nbar_grid,
        "estimator": est,
        "estimator_gt": est_gt,
        "sideband_crb": crb,
        "sideband_crb_gt": crb_gt,
        "bichromatic_crb": bichromatic_crb(nbar_grid),
        "cutoff_gt": cutoffs,
    }


def weighted_linear_fit(x, y, sigmas) -> dict:
    """Weighted least-squares line fit (used for heating rates)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    sigmas = np.asarray(sigmas, dtype=float)
    if x.size < 2:
        raise ValidationError("linear fit requires at least 2 points")
    if np.any(sigmas <= 0):
        raise ValidationError("sigmas must be positive")
    w = 1.0 / sigmas**2
    s, sx, sy = np.sum(w), np.sum(w * x), np.sum(w * y)
    sxx, sxy = np.sum(w * x * x), np.sum(w * x * y)
    delta = s * sxx - sx * sx
    slope = (s * sxy - sx * sy) / delta
    intercept = (sxx * sy - sx * sxy) / delta
    resid = (y - slope * x - intercept) / sigmas
    return {
        "slope": float(slope),
        "intercept": float(intercept),
        "slope_sigma": float(np.sqrt(s / delta)),
        "intercept_sigma": float(np.sqrt(sxx / delta)),
        "chi2": float(np.sum(resid**2)),
        "points": int(x.size),
    }
