"""MMSE channel estimation: per antenna over tones, and per tap across the array."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .channel import PowerDelayProfile
from .ofdm import PilotSequence, shift_operator, unitary_dft


@dataclass(frozen=True)
class LinkBudget:
    """Per-tone transmit power of every user and receiver noise variance."""

    noise_variance: float = 0.1
    tone_power: float | Mapping[tuple[int, int], float] = 1.0

    def __post_init__(self):
        if self.noise_variance <= 0:
            raise ValueError("noise variance must be positive")

    @classmethod
    def from_snr_db(cls, snr_db: float, tone_power: float = 1.0) -> "LinkBudget":
        return cls(tone_power / 10 ** (snr_db / 10), tone_power)

    def power(self, l: int, k: int) -> float:
        if isinstance(self.tone_power, Mapping):
            return float(self.tone_power[(l, k)])
        return float(self.tone_power)


@dataclass
class EstimationReport:
    estimates: np.ndarray
    error_covariance: np.ndarray
    residuals: np.ndarray | None = None
    filters: np.ndarray | None = field(default=None, repr=False)


# ---------------------------------------------------------------------------
# per-antenna estimation over tones


def _common_base(pilots: Sequence[PilotSequence]) -> bool:
    ref = pilots[0].base
    return all(len(p) == len(ref) and np.allclose(p.base, ref, atol=1e-12) for p in pilots)


def _check_inputs(pilots, pdps, powers):
    if not (len(pilots) == len(pdps) == len(powers)):
        raise ValueError("pilots, pdps and powers must have the same length")
    L = len(pilots[0])
    for p, d in zip(pilots, pdps):
        if len(p) != L or d.n_taps != L:
            raise ValueError("all pilots and profiles must share one length")
    return L


def _shifted_interference(pilots, pdps, powers, target):
    """Diagonal of the derotated interference covariance seen by ``target``."""
    L = len(pilots[0])
    total = np.zeros(L)
    tau_u = pilots[target].shift
    for i, (p, d, rho) in enumerate(zip(pilots, pdps, powers)):
        if i == target:
            continue
        theta = shift_operator(p.shift, tau_u, L)
        total += rho * theta.rotate_diagonal(d.powers)
    return total


def _interference_matrix(pilots, pdps, powers, target):
    """Full ``F^H S_u^H (Delta_1 + Delta_2) S_u F`` for arbitrary sequences."""
    L = len(pilots[0])
    F = unitary_dft(L)
    Su = pilots[target].values
    total = np.zeros((L, L), dtype=complex)
    for i, (p, d, rho) in enumerate(zip(pilots, pdps, powers)):
        if i == target:
            continue
        B = (np.conj(Su) * p.values)[:, None] * F
        total += rho * (F.conj().T @ B) @ np.diag(d.powers) @ (F.conj().T @ B).conj().T
    return total


def per_antenna_mmse(y: np.ndarray, pilots: Sequence[PilotSequence],
                     pdps: Sequence[PowerDelayProfile], powers: Sequence[float],
                     noise_variance: float, target: int = 0) -> np.ndarray:
    """MMSE estimate of ``target``'s impulse response from one antenna's tones.

    ``y`` may carry leading batch axes. Pilots built from one base sequence
    take a per-tap scalar Wiener filter after derotation; any other pilot set
    falls back to the full matrix form.
    """
    L = _check_inputs(pilots, pdps, powers)
    y = np.asarray(y)
    if y.shape[-1] != L:
        raise ValueError(f"observation length {y.shape[-1]} does not match pilot length {L}")
    rho_u = powers[target]
    P_u = pdps[target].powers
    S_u = pilots[target].values
    if _common_base(pilots):
        z = np.fft.ifft(np.conj(S_u) * y, axis=-1) * np.sqrt(L)
        denom = noise_variance + rho_u * P_u + _shifted_interference(pilots, pdps, powers, target)
        return np.sqrt(rho_u) * P_u / denom * z
    F = unitary_dft(L)
    z = (F.conj().T @ (np.conj(S_u)[:, None] * np.moveaxis(y, -1, 0).reshape(L, -1)))
    A = (noise_variance * np.eye(L) + rho_u * np.diag(P_u)
         + _interference_matrix(pilots, pdps, powers, target))
    est = np.sqrt(rho_u) * P_u[:, None] * np.linalg.solve(A, z)
    return np.moveaxis(est.reshape((L,) + y.shape[:-1]), 0, -1)


def per_antenna_error_cov(pilots: Sequence[PilotSequence], pdps: Sequence[PowerDelayProfile],
                          powers: Sequence[float], noise_variance: float,
                          target: int = 0) -> np.ndarray:
    """Error covariance of :func:`per_antenna_mmse` for ``target``."""
    _check_inputs(pilots, pdps, powers)
    rho_u = powers[target]
    P_u = pdps[target].powers
    if _common_base(pilots):
        interf = _shifted_interference(pilots, pdps, powers, target)
        return np.diag(P_u - rho_u * P_u**2 / (noise_variance + rho_u * P_u + interf))
    L = len(P_u)
    A = (noise_variance * np.eye(L) + rho_u * np.diag(P_u)
         + _interference_matrix(pilots, pdps, powers, target))
    Pm = np.diag(P_u)
    err = Pm - rho_u * Pm @ np.linalg.solve(A, Pm)
    return 0.5 * (err + err.conj().T)


def interference_free_error_cov(pdp: PowerDelayProfile, power: float,
                                noise_variance: float) -> np.ndarray:
    P = pdp.powers
    return np.diag(P - power * P**2 / (noise_variance + power * P))


# ---------------------------------------------------------------------------
# per-tap spatial estimation across the array


def pilot_observation(cir: np.ndarray, pilot: PilotSequence, power: float) -> np.ndarray:
    """Tone-domain pilot observation ``sqrt(rho) * S F h`` of ``(..., M, L)`` impulse responses."""
    L = len(pilot)
    H = np.fft.fft(cir, axis=-1) / np.sqrt(L)
    return np.sqrt(power) * pilot.values * H


def derotate_and_stack(y: np.ndarray, base: np.ndarray) -> np.ndarray:
    """Remove the base sequence and return to the delay domain.

    ``y`` has shape ``(..., M, L)`` (antennas by tones). Returns ``(..., L, M)``
    where row ``n`` is the array snapshot of delay tap ``n``.
    """
    y = np.asarray(y)
    L = y.shape[-1]
    if len(base) != L:
        raise ValueError("base sequence length does not match observation")
    z = np.fft.ifft(np.conj(base) * y, axis=-1) * np.sqrt(L)
    return np.swapaxes(z, -1, -2)


def _total_interference(C_own, C_others):
    if C_others is None:
        return np.zeros_like(C_own)
    if isinstance(C_others, np.ndarray):
        return C_others
    C_others = list(C_others)
    if not C_others:
        return np.zeros_like(C_own)
    return sum(C_others[1:], np.array(C_others[0], dtype=complex))


def _eye_like(C):
    return np.broadcast_to(np.eye(C.shape[-1]), C.shape)


def _hermitize(A):
    return 0.5 * (A + np.conj(np.swapaxes(A, -1, -2)))


def per_tap_filter(C_own, C_others, noise_variance: float) -> np.ndarray:
    """Wiener filter ``C_own (sigma^2 I + C_own + sum C_others)^{-1}``.

    ``C_others`` is a list of covariances or an already summed array; all
    matrices may carry leading batch axes.
    """
    C_own = np.asarray(C_own, dtype=complex)
    A = noise_variance * _eye_like(C_own) + C_own + _total_interference(C_own, C_others)
    # A and C_own are Hermitian, so C A^{-1} = (A^{-1} C)^H
    return np.conj(np.swapaxes(np.linalg.solve(A, C_own), -1, -2))


def per_tap_mmse(g, C_own, C_others, noise_variance: float) -> np.ndarray:
    """MMSE estimate of the desired aggregate tap from the array snapshot ``g``."""
    W = per_tap_filter(C_own, C_others, noise_variance)
    return np.einsum("...ij,...j->...i", W, g)


def per_tap_error_cov(C_own, C_others, noise_variance: float) -> np.ndarray:
    C_own = np.asarray(C_own, dtype=complex)
    A = noise_variance * _eye_like(C_own) + C_own + _total_interference(C_own, C_others)
    return _hermitize(C_own - C_own @ np.linalg.solve(A, C_own))


def residual_matrix(C_own, C_others, noise_variance: float) -> np.ndarray:
    """Extra error covariance caused by inter-cell interference."""
    C_own = np.asarray(C_own, dtype=complex)
    with_interf = per_tap_error_cov(C_own, C_others, noise_variance)
    without = per_tap_error_cov(C_own, None, noise_variance)
    return _hermitize(with_interf - without)


def residual_trace(C_own, C_interf, noise_variance: float) -> np.ndarray:
    """Trace of :func:`residual_matrix` for summed interference ``C_interf``, batched."""
    C_own = np.asarray(C_own, dtype=complex)
    eye = _eye_like(C_own)
    A0 = noise_variance * eye + C_own
    X0 = np.linalg.solve(A0, C_own)
    X1 = np.linalg.solve(A0 + C_interf, C_own)
    # Tr(C A^{-1} C) = sum(conj(C) * A^{-1} C) for Hermitian C
    t = np.einsum("...ij,...ij->...", np.conj(C_own), X0 - X1)
    return t.real


def _positive_eig(C, rel_tol):
    w, V = np.linalg.eigh(_hermitize(C))
    if w.size == 0 or w[-1] <= 0:
        return w[:0], V[:, :0]
    keep = w > rel_tol * w[-1]
    return w[keep], V[:, keep]


def residual_matrix_eigen(C_own, C_others, noise_variance: float,
                          rel_tol: float = 1e-9) -> np.ndarray:
    """Residual matrix from the eigen-factored closed form (single instance).

    Eigenvalues at or below ``rel_tol`` times the largest are dropped.
    """
    C_own = np.asarray(C_own, dtype=complex)
    M = C_own.shape[0]
    sig, U = _positive_eig(_total_interference(C_own, C_others), rel_tol)
    lam, V = _positive_eig(C_own, rel_tol)
    if sig.size == 0 or lam.size == 0:
        return np.zeros((M, M), dtype=complex)
    A_inv = np.linalg.inv(noise_variance * np.eye(M) + C_own)
    C = (V * lam) @ V.conj().T
    left = A_inv @ C @ U
    core = np.diag(1.0 / sig) + U.conj().T @ A_inv @ U
    R = left @ np.linalg.solve(core, left.conj().T)
    return _hermitize(R)


def estimate_taps(G: np.ndarray, C_own: np.ndarray, C_interf: np.ndarray | None,
                  noise_variance: float) -> EstimationReport:
    """Estimate every tap of one BS's aggregate channel.

    ``G`` has shape ``(..., L, M)``, ``C_own``/``C_interf`` ``(L, M, M)``.
    """
    C_own = np.asarray(C_own, dtype=complex)
    C_interf = np.zeros_like(C_own) if C_interf is None else C_interf
    W = per_tap_filter(C_own, C_interf, noise_variance)
    est = np.einsum("lij,...lj->...li", W, G)
    err = per_tap_error_cov(C_own, C_interf, noise_variance)
    res = _hermitize(err - per_tap_error_cov(C_own, None, noise_variance))
    return EstimationReport(est, err, res, W)
