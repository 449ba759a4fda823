"""Rates, powers, harvested energy and the EE objective.

Everything exists in two equivalent forms: a per-mode (eigenvalue-domain)
form used by the optimizer, and a full matrix form built from determinants
and traces which serves as its independent oracle.  With the closed-form
unitaries the two agree to machine precision.

Harvested-power convention: the received-noise power at the harvesting node
is scaled by (1-alpha) together with the signal term, i.e.
P_h = eta * (1-alpha) * (sum_i lh1_i r_i (q_i lh2_i + p_i lh1_i + s2_r) + s2_1).
This is the form whose equality point is the closed-form power-splitting
factor, so the solver's EH constraint is exactly active at the returned alpha.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import NetworkConfig, ChannelRealization, Spectra

__all__ = [
    "SpectrumPoint",
    "PrecoderSet",
    "ConstraintReport",
    "rate_tr1",
    "rate_tr2",
    "consumed_power",
    "harvested_power",
    "energy_efficiency",
    "ee_matrix_form",
    "check_feasibility",
]

LN2 = np.log(2.0)
FEAS_TOL = 1e-8


@dataclass(frozen=True)
class SpectrumPoint:
    """Optimization variables: PS factor and precoder eigenvalue vectors."""

    alpha: float
    lambda_q1: np.ndarray
    lambda_q2: np.ndarray
    lambda_qr: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "lambda_q1", np.asarray(self.lambda_q1, dtype=float))
        object.__setattr__(self, "lambda_q2", np.asarray(self.lambda_q2, dtype=float))
        object.__setattr__(self, "lambda_qr", np.asarray(self.lambda_qr, dtype=float))
        if not 0.0 < self.alpha < 1.0:
            raise ValueError("alpha must lie in (0, 1)")
        for name in ("lambda_q1", "lambda_q2", "lambda_qr"):
            if np.any(getattr(self, name) < -1e-12):
                raise ValueError(f"{name} must be nonnegative")


@dataclass(frozen=True)
class PrecoderSet:
    """Assembled covariance/precoding matrices for one spectrum point."""

    q1: np.ndarray
    q2: np.ndarray
    qr: np.ndarray
    f1: np.ndarray
    f2: np.ndarray
    exact: bool = True  # False when built on an approximate decomposition


@dataclass(frozen=True)
class ConstraintReport:
    """Constraint slacks (>= 0 means satisfied) and overall feasibility."""

    power_tr1: float
    power_tr2: float
    power_relay: float
    rate_tr1: float
    rate_tr2: float
    eh_balance: float
    feasible: bool


def _mode_vectors(pt: SpectrumPoint, spectra: Spectra, nr: int):
    """Per-mode vectors padded/truncated to a common length nr."""
    def fit(v):
        v = np.asarray(v, dtype=float)
        if v.size >= nr:
            return v[:nr]
        return np.concatenate([v, np.zeros(nr - v.size)])

    return (
        fit(pt.lambda_q1), fit(pt.lambda_q2), fit(pt.lambda_qr),
        fit(spectra.lambda_h1), fit(spectra.lambda_h2),
    )


def rate_tr1(pt: SpectrumPoint, spectra: Spectra, config: NetworkConfig) -> float:
    """Half-prelog sum-rate decoded at the harvesting transceiver."""
    p, q, r, a, b = _mode_vectors(pt, spectra, config.nr)
    al = pt.alpha
    num = al * r * q * a * b
    den = config.sigma2_d + al * config.sigma2_1 + al * config.sigma2_r * r * a
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(num > 0.0, num / den, 0.0)
    return 0.5 * float(np.sum(np.log1p(ratio))) / LN2


def rate_tr2(pt: SpectrumPoint, spectra: Spectra, config: NetworkConfig) -> float:
    """Half-prelog sum-rate decoded at the unconstrained transceiver."""
    p, q, r, a, b = _mode_vectors(pt, spectra, config.nr)
    num = r * p * a * b
    den = config.sigma2_2 + config.sigma2_r * r * b
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(num > 0.0, num / den, 0.0)
    return 0.5 * float(np.sum(np.log1p(ratio))) / LN2


def relay_transmit_power(pt: SpectrumPoint, spectra: Spectra, config: NetworkConfig) -> float:
    """Transmit power radiated by the relay for this spectrum point."""
    p, q, r, a, b = _mode_vectors(pt, spectra, config.nr)
    return float(np.sum(r * (q * b + p * a + config.sigma2_r)))


def consumed_power(pt: SpectrumPoint, spectra: Spectra, config: NetworkConfig) -> float:
    """Total network power draw: amplifier-corrected transmit plus circuit."""
    pr = relay_transmit_power(pt, spectra, config)
    return (
        float(np.sum(pt.lambda_q1)) / config.xi_1
        + pr / config.xi_r
        + float(np.sum(pt.lambda_q2)) / config.xi_2
        + config.pc_total
    )


def harvested_power(pt: SpectrumPoint, spectra: Spectra, config: NetworkConfig) -> float:
    """Power collected by the harvesting branch at TR1."""
    p, q, r, a, b = _mode_vectors(pt, spectra, config.nr)
    collected = float(np.sum(a * r * (q * b + p * a + config.sigma2_r))) + config.sigma2_1
    return config.eh_efficiency * (1.0 - pt.alpha) * collected


def energy_efficiency(pt: SpectrumPoint, spectra: Spectra, config: NetworkConfig) -> float:
    """EE in bits/Hz/J: total half-prelog rate over total consumed power."""
    rate = rate_tr1(pt, spectra, config) + rate_tr2(pt, spectra, config)
    return rate / consumed_power(pt, spectra, config)


def _logdet(m: np.ndarray) -> float:
    sign, val = np.linalg.slogdet(m)
    if sign.real <= 0:
        raise np.linalg.LinAlgError("non-positive determinant in rate evaluation")
    return float(val) / LN2


def ee_matrix_form(
    alpha: float,
    prec: PrecoderSet,
    ch: ChannelRealization,
    config: NetworkConfig,
) -> float:
    """EE evaluated purely through determinants/traces of the matrix forms.

    Independent of the eigenvalue shortcut; used as the oracle that validates
    the closed-form unitaries and the per-mode scalarization.
    """
    h1, h2 = ch.h1, ch.h2
    q1, q2, qr = prec.q1, prec.q2, prec.qr
    nr = config.nr
    s2r, s21, s22, s2d = config.sigma2_r, config.sigma2_1, config.sigma2_2, config.sigma2_d
    if s2d + alpha * s21 <= 0.0 or s22 <= 0.0:
        raise ValueError("noise covariance is singular; rates undefined")

    a_mat = s2r * np.eye(nr) + h2 @ q2 @ h2.conj().T
    b_mat = s2r * np.eye(nr) + h1 @ q1 @ h1.conj().T

    c1 = s2d + alpha * s21
    g1 = h1.conj().T @ qr
    g2 = h2.conj().T @ qr
    n1, n2 = config.n1, config.n2
    rate1 = 0.5 * (
        _logdet(c1 * np.eye(n1) + alpha * g1 @ a_mat @ g1.conj().T)
        - _logdet(c1 * np.eye(n1) + alpha * s2r * g1 @ g1.conj().T)
    )
    rate2 = 0.5 * (
        _logdet(s22 * np.eye(n2) + g2 @ b_mat @ g2.conj().T)
        - _logdet(s22 * np.eye(n2) + s2r * g2 @ g2.conj().T)
    )

    relay_sig = h1 @ q1 @ h1.conj().T + h2 @ q2 @ h2.conj().T + s2r * np.eye(nr)
    power = (
        float(np.trace(q1).real) / config.xi_1
        + float(np.trace(qr @ relay_sig @ qr.conj().T).real) / config.xi_r
        + float(np.trace(q2).real) / config.xi_2
        + config.pc_total
    )
    return (rate1 + rate2) / power


def check_feasibility(
    pt: SpectrumPoint,
    spectra: Spectra,
    config: NetworkConfig,
    *,
    ignore_eh: bool = False,
) -> ConstraintReport:
    """Evaluate all constraint slacks at a spectrum point.

    ``ignore_eh`` drops the harvesting balance from the feasibility verdict
    (used by the no-EH baseline); the slack itself is still reported.
    """
    s_p1 = config.p1_max - float(np.sum(pt.lambda_q1))
    s_p2 = config.p2_max - float(np.sum(pt.lambda_q2))
    s_pr = config.pr_max - relay_transmit_power(pt, spectra, config)
    s_r1 = rate_tr1(pt, spectra, config) - config.rt_min / 2.0
    s_r2 = rate_tr2(pt, spectra, config) - config.rt_min / 2.0
    s_eh = harvested_power(pt, spectra, config) - (
        float(np.sum(pt.lambda_q1)) + config.p1_cr + config.p1_ct
    )
    slacks = [s_p1, s_p2, s_pr, s_r1, s_r2]
    if not ignore_eh:
        slacks.append(s_eh)
    return ConstraintReport(
        power_tr1=s_p1,
        power_tr2=s_p2,
        power_relay=s_pr,
        rate_tr1=s_r1,
        rate_tr2=s_r2,
        eh_balance=s_eh,
        feasible=all(s >= -FEAS_TOL for s in slacks),
    )
