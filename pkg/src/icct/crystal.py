"""Ion-chain geometry, normal modes, and mode-file handling.

Works in dimensionless units: lengths in the characteristic Coulomb length
and frequencies in units of the axial trap frequency ω_z. The only quantities
consumed downstream are the per-ion coupling vector η (normalized Ση² = 1)
and the average sideband Rabi rate g, bundled in :class:`ModeSpec`.

Mode vectors of planar crystals are not computed here; they are accepted
through the JSON mode-file format only.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.linalg

from .errors import ConvergenceError, InstabilityError, ValidationError

__all__ = [
    "ModeSpec",
    "ChainConfig",
    "equilibrium_positions",
    "chain_modes",
    "critical_anisotropy",
    "make_mode_spec",
    "com_mode",
    "load_mode_file",
    "save_mode_file",
    "mode_spec_to_dict",
]

_NORM_TOL = 1e-9
_FILE_NORM_TOL = 1e-3


@dataclass(frozen=True)
class ModeSpec:
    """One motional mode: label, coupling vector, and sideband Rabi rate.

    η_i absorbs every per-ion coupling inhomogeneity (Lamb-Dicke factors,
    Rabi-frequency variation) and is normalized so that Ση_i² = 1; g is the
    matching average sideband Rabi rate in rad/s. ``frequency`` is the mode
    angular frequency, informational only.
    """

    label: str
    eta: np.ndarray
    g: float
    frequency: float | None = None

    def __post_init__(self):
        eta = np.asarray(self.eta, dtype=float)
        eta.setflags(write=False)
        object.__setattr__(self, "eta", eta)
        if eta.ndim != 1 or eta.size < 1:
            raise ValidationError("eta must be a non-empty vector")
        if not np.all(np.isfinite(eta)):
            raise ValidationError("eta entries must be finite")
        norm2 = float(np.sum(eta * eta))
        if abs(norm2 - 1.0) > _NORM_TOL:
            raise ValidationError(
                f"mode {self.label!r}: Ση² = {norm2!r}, must equal 1 within {_NORM_TOL}"
            )
        if not (self.g > 0) or not np.isfinite(self.g):
            raise ValidationError("g must be positive and finite")

    @property
    def n_ions(self) -> int:
        return int(self.eta.size)

    def is_com(self, tol: float = 1e-9) -> bool:
        return bool(np.all(np.abs(np.abs(self.eta) - 1.0 / np.sqrt(self.n_ions)) < tol))


@dataclass(frozen=True)
class ChainConfig:
    """Linear-chain trap configuration.

    ``anisotropy`` is the ratio of the transverse to the axial trap
    frequency; transverse modes only exist above the zigzag instability
    threshold, which is checked numerically.
    """

    n_ions: int
    anisotropy: float = 6.0
    axis: str = "transverse"

    def __post_init__(self):
        if self.n_ions < 1:
            raise ValidationError("n_ions must be at least 1")
        if not (self.anisotropy > 0):
            raise ValidationError("anisotropy must be positive")
        if self.axis not in ("axial", "transverse"):
            raise ValidationError(f"axis must be 'axial' or 'transverse', got {self.axis!r}")


def equilibrium_positions(n_ions: int, *, max_iter: int = 200, tol: float = 1e-12) -> np.ndarray:
    """Equilibrium positions of a linear Coulomb chain, sorted ascending.

    Solves u_i = Σ_{j<i} (u_i−u_j)⁻² − Σ_{j>i} (u_j−u_i)⁻² by damped Newton
    iteration from an even-spacing ansatz; the Jacobian is strictly
    diagonally dominant, so plain Newton with step halving is robust.
    """
    if n_ions < 1:
        raise ValidationError("n_ions must be at least 1")
    if n_ions == 1:
        return np.zeros(1)
    # minimal-spacing scaling fit for homogeneous chains
    spacing = 2.018 / n_ions**0.559
    u = (np.arange(n_ions) - 0.5 * (n_ions - 1)) * spacing

    def force(u):
        diff = u[:, None] - u[None, :]
        np.fill_diagonal(diff, np.inf)
        inv2 = np.sign(diff) / diff**2
        return u - np.sum(inv2, axis=1)

    def jacobian(u):
        diff = u[:, None] - u[None, :]
        np.fill_diagonal(diff, np.inf)
        off = -2.0 / np.abs(diff) ** 3
        jac = off.copy()
        np.fill_diagonal(jac, 1.0 - np.sum(off, axis=1))
        return jac

    f = force(u)
    for _ in range(max_iter):
        res = np.max(np.abs(f))
        if res < tol:
            break
        step = np.linalg.solve(jacobian(u), f)
        alpha = 1.0
        while alpha > 1e-6:
            trial = u - alpha * step
            if np.all(np.diff(trial) > 0):
                f_trial = force(trial)
                if np.max(np.abs(f_trial)) < res:
                    u, f = trial, f_trial
                    break
            alpha *= 0.5
        else:
            raise ConvergenceError("equilibrium solve stalled (damping exhausted)")
    else:
        raise ConvergenceError(f"equilibrium solve did not reach {tol} in {max_iter} iterations")
    # the chain is mirror symmetric; remove the solver's parity dust
    return 0.5 * (u - u[::-1])


def _coulomb_matrix(u: np.ndarray) -> np.ndarray:
    """Matrix M with M·(1,…,1) = 0 entering both Hessians: axial = I + 2M,
    transverse = a²I − M."""
    diff = u[:, None] - u[None, :]
    np.fill_diagonal(diff, np.inf)
    inv3 = 1.0 / np.abs(diff) ** 3
    m = -inv3
    np.fill_diagonal(m, np.sum(inv3, axis=1))
    return m


def critical_anisotropy(n_ions: int) -> float:
    """Zigzag threshold: smallest transverse/axial frequency ratio keeping a
    linear chain of n_ions stable."""
    if n_ions < 3:
        return 0.0
    u = equilibrium_positions(n_ions)
    mu_max = float(np.max(scipy.linalg.eigvalsh(_coulomb_matrix(u))))
    return float(np.sqrt(mu_max))


def chain_modes(config: ChainConfig) -> list[tuple[float, np.ndarray]]:
    """Normal modes of a linear chain along the chosen axis.

    Returns (frequency, unit eigenvector) pairs sorted by frequency, in
    units of the axial trap frequency. The COM eigenvector is (1,…,1)/√N
    with frequency 1 (axial) or the anisotropy (transverse, the highest).
    """
    u = equilibrium_positions(config.n_ions)
    m = _coulomb_matrix(u)
    if config.axis == "axial":
        hess = np.eye(config.n_ions) + 2.0 * m
    else:
        hess = config.anisotropy**2 * np.eye(config.n_ions) - m
    evals, vecs = scipy.linalg.eigh(hess)
    if np.any(evals <= 0):
        raise InstabilityError(
            f"chain of {config.n_ions} ions unstable on the {config.axis} axis "
            f"(anisotropy {config.anisotropy}, min eigenvalue {evals.min():.4g}); "
            f"critical anisotropy is {critical_anisotropy(config.n_ions):.4f}"
        )
    out = []
    for k in range(config.n_ions):
        vec = vecs[:, k]
        if vec.sum() < 0 or (abs(vec.sum()) < 1e-12 and vec[np.argmax(np.abs(vec))] < 0):
            vec = -vec
        out.append((float(np.sqrt(evals[k])), vec))
    return out


def make_mode_spec(eta_unit, g: float, label: str = "", frequency: float | None = None) -> ModeSpec:
    """Build a ModeSpec, rescaling η so Ση² = 1 exactly (signs preserved)."""
    eta = np.asarray(eta_unit, dtype=float)
    if not np.all(np.isfinite(eta)):
        raise ValidationError("eta entries must be finite")
    norm = float(np.linalg.norm(eta))
    if norm == 0.0:
        raise ValidationError("eta must be a non-zero vector")
    return ModeSpec(label=label, eta=eta / norm, g=float(g), frequency=frequency)


def com_mode(n_ions: int, g: float = 1.0, label: str | None = None) -> ModeSpec:
    """Center-of-mass mode: all ions couple equally, η_i = 1/√N."""
    if n_ions < 1:
        raise ValidationError("n_ions must be at least 1")
    return make_mode_spec(np.ones(n_ions), g, label or f"com{n_ions}")


# ---------------------------------------------------------------------------
# mode-file I/O

def mode_spec_to_dict(mode: ModeSpec) -> dict:
    return {
        "label": mode.label,
        "eta": [float(v) for v in mode.eta],
        "g_rad_per_s": float(mode.g),
        "frequency_rad_per_s": None if mode.frequency is None else float(mode.frequency),
    }


def save_mode_file(mode: ModeSpec, path) -> None:
    Path(path).write_text(json.dumps(mode_spec_to_dict(mode), indent=2) + "\n")


def load_mode_file(path) -> ModeSpec:
    """Load a mode file, renormalizing η when |Ση²−1| ≤ 1e-3 and erroring
    on anything farther from normalization."""
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ValidationError(f"mode file {path}: invalid JSON ({exc})") from exc
    return mode_from_dict(data, origin=str(path))


def mode_from_dict(data: dict, origin: str = "<dict>") -> ModeSpec:
    try:
        eta = np.asarray(data["eta"], dtype=float)
        g = float(data["g_rad_per_s"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ValidationError(f"mode file {origin}: missing or malformed field ({exc})") from exc
    label = str(data.get("label", ""))
    freq = data.get("frequency_rad_per_s")
    frequency = None if freq is None else float(freq)
    if not np.all(np.isfinite(eta)):
        raise ValidationError(f"mode file {origin}: eta entries must be finite")
    norm2 = float(np.sum(eta * eta))
    if abs(norm2 - 1.0) > _FILE_NORM_TOL:
        raise ValidationError(
            f"mode file {origin}: Ση² = {norm2:.6g} deviates from 1 by more than {_FILE_NORM_TOL}"
        )
    return make_mode_spec(eta, g, label, frequency)
