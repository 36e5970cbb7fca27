import json

import numpy as np
import pytest

from icct.crystal import (
    ChainConfig,
    ModeSpec,
    chain_modes,
    com_mode,
    critical_anisotropy,
    equilibrium_positions,
    load_mode_file,
    make_mode_spec,
    save_mode_file,
)
from icct.errors import InstabilityError, ValidationError


def chain_residual(u):
    diff = u[:, None] - u[None, :]
    np.fill_diagonal(diff, np.inf)
    return u - np.sum(np.sign(diff) / diff**2, axis=1)


def test_equilibrium_closed_forms():
    assert equilibrium_positions(1) == pytest.approx([0.0])
    assert equilibrium_positions(2) == pytest.approx([-((0.25) ** (1 / 3)), (0.25) ** (1 / 3)], abs=1e-10)
    x3 = (1.25) ** (1 / 3)
    assert equilibrium_positions(3) == pytest.approx([-x3, 0.0, x3], abs=1e-10)


@pytest.mark.parametrize("n", [4, 7, 12, 25, 50])
def test_equilibrium_residual_and_symmetry(n):
    u = equilibrium_positions(n)
    assert np.all(np.diff(u) > 0)
    assert np.max(np.abs(chain_residual(u))) < 1e-10
    assert np.max(np.abs(u + u[::-1])) < 1e-10


def test_two_ion_axial_modes():
    modes = chain_modes(ChainConfig(2, axis="axial"))
    freqs = [f for f, _ in modes]
    assert freqs == pytest.approx([1.0, np.sqrt(3.0)], abs=1e-10)


def test_single_ion_mode():
    modes = chain_modes(ChainConfig(1, axis="transverse", anisotropy=3.0))
    assert len(modes) == 1
    assert modes[0][1] == pytest.approx([1.0])


def test_chain_modes_eigensystem_quality():
    cfg = ChainConfig(6, anisotropy=8.0, axis="transverse")
    u = equilibrium_positions(6)
    diff = u[:, None] - u[None, :]
    np.fill_diagonal(diff, np.inf)
    inv3 = 1.0 / np.abs(diff) ** 3
    m = -inv3
    np.fill_diagonal(m, np.sum(inv3, axis=1))
    hess = 64.0 * np.eye(6) - m
    vecs = np.array([v for _, v in chain_modes(cfg)]).T
    freqs = np.array([f for f, _ in chain_modes(cfg)])
    assert np.max(np.abs(vecs.T @ vecs - np.eye(6))) < 1e-10
    for k in range(6):
        assert np.linalg.norm(hess @ vecs[:, k] - freqs[k] ** 2 * vecs[:, k]) < 1e-9


def test_transverse_com_is_highest_and_matches_experiment():
    # trap with 666 kHz transverse and 111 kHz axial confinement
    cfg = ChainConfig(4, anisotropy=666.0 / 111.0, axis="transverse")
    modes = chain_modes(cfg)
    freqs = np.array([f for f, _ in modes])
    com_vec = modes[-1][1]
    assert np.allclose(com_vec, 0.5, atol=1e-10)
    assert freqs[-1] == pytest.approx(cfg.anisotropy, abs=1e-12)
    measured = np.array([623.6, 643.1, 656.9, 666.0]) / 666.0
    assert np.allclose(freqs / freqs[-1], measured, atol=6e-3)


def test_axial_com_eigenvector():
    modes = chain_modes(ChainConfig(5, axis="axial"))
    freq, vec = modes[0]
    assert freq == pytest.approx(1.0, abs=1e-12)
    assert np.allclose(vec, 1.0 / np.sqrt(5.0), atol=1e-10)


def test_zigzag_instability_detected():
    a_crit = critical_anisotropy(5)
    with pytest.raises(InstabilityError):
        chain_modes(ChainConfig(5, anisotropy=0.9 * a_crit, axis="transverse"))
    chain_modes(ChainConfig(5, anisotropy=1.1 * a_crit, axis="transverse"))


def test_make_mode_spec_normalization():
    spec = make_mode_spec([1.0, 1.0], g=2.0)
    assert spec.eta == pytest.approx([1 / np.sqrt(2)] * 2, abs=1e-15)
    spec = make_mode_spec([2.0, 0.0, 0.0], g=1.0)
    assert spec.eta == pytest.approx([1.0, 0.0, 0.0])
    spec = make_mode_spec([-3.0, 4.0], g=1.0)
    assert spec.eta[0] < 0 < spec.eta[1]
    com19 = com_mode(19)
    assert com19.eta == pytest.approx(np.full(19, 1.0 / np.sqrt(19.0)))
    assert abs(np.sum(com19.eta**2) - 1.0) < 1e-12


def test_make_mode_spec_validation():
    with pytest.raises(ValidationError):
        make_mode_spec([0.0, 0.0], g=1.0)
    with pytest.raises(ValidationError):
        make_mode_spec([np.inf, 1.0], g=1.0)
    with pytest.raises(ValidationError):
        make_mode_spec([1.0], g=0.0)
    with pytest.raises(ValidationError):
        ModeSpec(label="bad", eta=np.array([0.8, 0.8]), g=1.0)


def test_mode_file_round_trip(tmp_path):
    spec = make_mode_spec([0.3, -0.5, 0.81], g=550.0, label="demo", frequency=2 * np.pi * 640e3)
    path = tmp_path / "demo.json"
    save_mode_file(spec, path)
    loaded = load_mode_file(path)
    assert loaded.label == "demo"
    assert loaded.g == spec.g
    assert loaded.frequency == spec.frequency
    assert loaded.eta == pytest.approx(spec.eta, abs=1e-15)


def test_mode_file_renormalization_rule(tmp_path):
    path = tmp_path / "near.json"
    eta = [0.6, 0.8]
    path.write_text(json.dumps({"label": "x", "eta": [v * 1.0004 for v in eta],
                                "g_rad_per_s": 1.0, "frequency_rad_per_s": None}))
    loaded = load_mode_file(path)  # |sum eta^2 - 1| ~ 8e-4 <= 1e-3: renormalized
    assert np.sum(loaded.eta**2) == pytest.approx(1.0, abs=1e-12)
    path.write_text(json.dumps({"label": "x", "eta": [v * 1.01 for v in eta],
                                "g_rad_per_s": 1.0, "frequency_rad_per_s": None}))
    with pytest.raises(ValidationError):
        load_mode_file(path)


def test_mode_file_malformed(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text("{not json")
    with pytest.raises(ValidationError):
        load_mode_file(path)
    path.write_text(json.dumps({"label": "x", "eta": [1.0]}))
    with pytest.raises(ValidationError):
        load_mode_file(path)
