"""Network configuration and channel generation.

Channels are stored together with a joint decomposition H_i = U Λ_i^{1/2} V_i^H
sharing the left unitary U across both links.  All downstream rate/power
expressions work purely on the eigenvalue vectors of this decomposition, so the
generator can either enforce the shared-U structure exactly (making the
closed-form precoder unitaries exact) or draw plain i.i.d. Gaussian channels
and accept an approximate decomposition.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from typing import NamedTuple

import numpy as np

__all__ = [
    "ChannelMode",
    "NetworkConfig",
    "ChannelRealization",
    "Spectra",
    "generate_channels",
    "channel_spectra",
    "load_config_file",
    "config_from_mapping",
]


class ChannelMode(enum.Enum):
    """How the pair (H1, H2) is drawn."""

    SHARED_LEFT_UNITARY = "shared"
    IID_GAUSSIAN = "iid"


@dataclass(frozen=True)
class NetworkConfig:
    """Static network parameters (antennas, noise, power budget, QoS).

    All powers are in watts, rates in bits/s/Hz, and the amplifier /
    harvester efficiencies are fractions in (0, 1].
    """

    n1: int = 2
    n2: int = 2
    nr: int = 2
    sigma2_1: float = 0.2
    sigma2_2: float = 0.2
    sigma2_r: float = 0.2
    sigma2_d: float = 0.2
    p1_max: float = 8.0
    p2_max: float = 8.0
    pr_max: float = 8.0
    pc_total: float = 3.0
    p1_ct: float = 0.5
    p1_cr: float = 0.5
    rt_min: float = 1.0
    xi_1: float = 1.0
    xi_2: float = 1.0
    xi_r: float = 1.0
    time_interval: float = 1.0
    eh_efficiency: float = 1.0

    def __post_init__(self):
        for name in ("n1", "n2", "nr"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be a positive integer")
        for name in (
            "sigma2_1", "sigma2_2", "sigma2_r", "sigma2_d",
            "pc_total", "p1_ct", "p1_cr", "rt_min",
        ):
            if getattr(self, name) < 0.0:
                raise ValueError(f"{name} must be nonnegative")
        for name in ("p1_max", "p2_max", "pr_max", "time_interval"):
            if getattr(self, name) <= 0.0:
                raise ValueError(f"{name} must be positive")
        for name in ("xi_1", "xi_2", "xi_r", "eh_efficiency"):
            v = getattr(self, name)
            if not 0.0 < v <= 1.0:
                raise ValueError(f"{name} must lie in (0, 1]")
        if self.pc_total < self.p1_ct + self.p1_cr - 1e-12:
            raise ValueError("pc_total must cover at least p1_ct + p1_cr")

    def with_updates(self, **kwargs) -> "NetworkConfig":
        return replace(self, **kwargs)


class Spectra(NamedTuple):
    """Eigenvalue-domain view of a channel pair."""

    lambda_h1: np.ndarray
    lambda_h2: np.ndarray
    u_h: np.ndarray
    v_h1: np.ndarray
    v_h2: np.ndarray


@dataclass(frozen=True)
class ChannelRealization:
    """One block-fading draw of the pair (H1, H2) plus its decomposition.

    ``lambda_h1``/``lambda_h2`` hold the squared singular values, sorted
    descending and zero-padded to length ``nr`` so every per-mode sum can run
    over a common index range.  ``shared_left_unitary`` records whether the
    decomposition is exact (shared-U generation) or only approximate
    (i.i.d. generation, decomposition taken from each channel's own SVD).
    """

    h1: np.ndarray
    h2: np.ndarray
    u_h: np.ndarray
    lambda_h1: np.ndarray
    lambda_h2: np.ndarray
    v_h1: np.ndarray
    v_h2: np.ndarray
    mode: ChannelMode
    seed: int
    shared_left_unitary: bool = True


def _haar_unitary(n: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-distributed n x n unitary via QR of a Ginibre matrix."""
    z = (rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))) / np.sqrt(2.0)
    q, r = np.linalg.qr(z)
    d = np.diagonal(r)
    return q * (d / np.abs(d))


def _rect_diag(values: np.ndarray, rows: int, cols: int) -> np.ndarray:
    out = np.zeros((rows, cols), dtype=complex)
    k = min(rows, cols, values.size)
    out[np.arange(k), np.arange(k)] = values[:k]
    return out


def _pad(v: np.ndarray, n: int) -> np.ndarray:
    if v.size >= n:
        return v[:n]
    return np.concatenate([v, np.zeros(n - v.size)])


def generate_channels(
    config: NetworkConfig,
    seed: int,
    mode: ChannelMode = ChannelMode.SHARED_LEFT_UNITARY,
) -> ChannelRealization:
    """Draw one channel realization, deterministic in (seed, mode, config).

    In shared mode the left unitary is one Haar draw used for both channels,
    the right unitaries are independent Haar draws, and the eigenvalues are
    squared singular values of an i.i.d. CN(0,1) matrix; the composed H_i is
    then itself CN(0,1)-distributed while the decomposition is exact.  In iid
    mode each H_i is drawn entrywise CN(0,1) and decomposed by its own SVD,
    so the shared-U property only holds approximately.
    """
    rng = np.random.default_rng(seed)
    nr, n1, n2 = config.nr, config.n1, config.n2

    if mode is ChannelMode.SHARED_LEFT_UNITARY:
        u_h = _haar_unitary(nr, rng)
        mats = []
        for ni in (n1, n2):
            v = _haar_unitary(ni, rng)
            g = (rng.standard_normal((nr, ni)) + 1j * rng.standard_normal((nr, ni)))
            g /= np.sqrt(2.0)
            s = np.linalg.svd(g, compute_uv=False)  # descending
            h = u_h @ _rect_diag(s, nr, ni) @ v.conj().T
            mats.append((h, s**2, v))
        (h1, lam1, v1), (h2, lam2, v2) = mats
        return ChannelRealization(
            h1=h1, h2=h2, u_h=u_h,
            lambda_h1=_pad(lam1, nr), lambda_h2=_pad(lam2, nr),
            v_h1=v1, v_h2=v2,
            mode=mode, seed=seed, shared_left_unitary=True,
        )

    if mode is ChannelMode.IID_GAUSSIAN:
        mats = []
        for ni in (n1, n2):
            h = (rng.standard_normal((nr, ni)) + 1j * rng.standard_normal((nr, ni)))
            h /= np.sqrt(2.0)
            u, s, vh = np.linalg.svd(h, full_matrices=True)
            mats.append((h, u, s**2, vh.conj().T))
        (h1, u1, lam1, v1), (h2, _, lam2, v2) = mats
        # u_h is taken from H1; the decomposition of H2 through it is only
        # approximate, which shared_left_unitary=False records.
        return ChannelRealization(
            h1=h1, h2=h2, u_h=u1,
            lambda_h1=_pad(lam1, nr), lambda_h2=_pad(lam2, nr),
            v_h1=v1, v_h2=v2,
            mode=mode, seed=seed, shared_left_unitary=False,
        )

    raise ValueError(f"unknown channel mode: {mode!r}")


def channel_spectra(ch: ChannelRealization) -> Spectra:
    """Return the stored decomposition of a realization (no recomputation)."""
    return Spectra(ch.lambda_h1, ch.lambda_h2, ch.u_h, ch.v_h1, ch.v_h2)


# --- flat key-value config files -------------------------------------------

_INT_FIELDS = {"n1", "n2", "nr"}
_CONFIG_FIELDS = set(NetworkConfig.__dataclass_fields__)


class ConfigError(ValueError):
    """Raised for malformed config files or unknown keys."""


def load_config_file(path: str) -> dict[str, str]:
    """Parse a flat ``key = value`` file; '#' starts a comment.

    Returns raw string values keyed by name; keys may carry a dotted
    namespace (e.g. ``solver.alt_tol``).
    """
    out: dict[str, str] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
            key, value = (part.strip() for part in line.split("=", 1))
            if not key or not value:
                raise ConfigError(f"{path}:{lineno}: empty key or value")
            out[key] = value
    return out


def config_from_mapping(mapping: dict[str, str]) -> NetworkConfig:
    """Build a NetworkConfig from flat string values; unknown keys rejected.

    Keys with a dot (other namespaces such as ``solver.*``) are ignored here.
    """
    kwargs = {}
    for key, value in mapping.items():
        if "." in key:
            continue
        if key not in _CONFIG_FIELDS:
            raise ConfigError(f"unknown config key: {key}")
        try:
            kwargs[key] = int(value) if key in _INT_FIELDS else float(value)
        except ValueError as exc:
            raise ConfigError(f"bad value for {key}: {value}") from exc
    try:
        return NetworkConfig(**kwargs)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
