"""OFDM numerology, unitary DFT and cyclic-shift pilot sequences."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class OfdmConfig:
    """OFDM numerology.

    Parameters
    ----------
    n_tones : int
        Number of sub-carriers N.
    n_cp : int
        Cyclic prefix length in chips.
    symbol_duration : float
        Useful OFDM symbol duration T in seconds.
    """

    n_tones: int = 128
    n_cp: int = 8
    symbol_duration: float = 66.67e-6

    def __post_init__(self):
        if self.n_tones < 1 or self.n_cp < 1:
            raise ValueError("n_tones and n_cp must be positive")
        if self.n_cp > self.n_tones:
            raise ValueError(f"n_cp={self.n_cp} exceeds n_tones={self.n_tones}")
        if self.symbol_duration <= 0:
            raise ValueError("symbol_duration must be positive")

    @property
    def chip_duration(self) -> float:
        return self.symbol_duration / self.n_tones

    @property
    def tone_spacing(self) -> float:
        return 1.0 / self.symbol_duration

    @property
    def n_groups(self) -> int:
        """Number of comb tone groups (floor of N / N_cp)."""
        return self.n_tones // self.n_cp

    def tone_group(self, group: int) -> list[int]:
        """Absolute tone indices of comb ``group`` (0-based)."""
        if not 0 <= group < self.n_groups:
            raise ValueError(f"group {group} outside [0, {self.n_groups - 1}]")
        step = self.n_tones // self.n_cp
        return [group + n * step for n in range(self.n_cp)]


def unitary_dft(n: int) -> np.ndarray:
    """Unitary DFT matrix, ``F[k, t] = exp(-2j*pi*k*t/n) / sqrt(n)``."""
    if n < 1:
        raise ValueError(f"DFT size must be positive, got {n}")
    k = np.arange(n)
    return np.exp(-2j * np.pi * np.outer(k, k) / n) / np.sqrt(n)


def base_sequence(length: int) -> np.ndarray:
    """Quadratic-phase unit-modulus sequence ``exp(-j*pi*n^2/length)``."""
    if length < 1:
        raise ValueError(f"sequence length must be positive, got {length}")
    n = np.arange(length)
    # n^2 mod 2L keeps the phase argument small for long sequences
    return np.exp(-1j * np.pi * ((n * n) % (2 * length)) / length)


def _shift_phase(tau: int, length: int) -> np.ndarray:
    n = np.arange(length)
    return np.exp(2j * np.pi * ((tau * n) % length) / length)


@dataclass(frozen=True, eq=False)
class PilotSequence:
    """Cyclically shifted pilot occupying ``tone_set``."""

    values: np.ndarray
    shift: int
    tone_set: tuple[int, ...] = field(default=())

    def __post_init__(self):
        values = np.asarray(self.values, dtype=complex)
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        if not self.tone_set:
            object.__setattr__(self, "tone_set", tuple(range(len(values))))
        if len(self.tone_set) != len(values):
            raise ValueError("tone_set length does not match sequence length")

    def __len__(self):
        return len(self.values)

    @property
    def base(self) -> np.ndarray:
        """The unshifted sequence this pilot was built from."""
        return self.values * np.conj(_shift_phase(self.shift, len(self)))

    def matrix(self) -> np.ndarray:
        return np.diag(self.values)


def shifted_sequence(base: np.ndarray, tau: int, tone_set=None) -> PilotSequence:
    """Apply a cyclic time shift of ``tau`` chips to ``base``."""
    base = np.asarray(base, dtype=complex)
    length = len(base)
    if not 0 <= tau < length:
        raise ValueError(f"shift {tau} outside [0, {length - 1}]")
    values = base * _shift_phase(tau, length)
    return PilotSequence(values, int(tau), tuple(tone_set) if tone_set is not None else ())


@dataclass(frozen=True)
class ShiftOperator:
    """Circulant permutation relating two pilots that share a base.

    ``(theta @ x)[t] = x[(t + delta_tau) % size]``.
    """

    delta_tau: int
    size: int

    def matrix(self) -> np.ndarray:
        L = self.size
        theta = np.zeros((L, L))
        t = np.arange(L)
        theta[t, (t + self.delta_tau) % L] = 1.0
        return theta

    def apply(self, x: np.ndarray) -> np.ndarray:
        return np.roll(np.asarray(x), -self.delta_tau, axis=0)

    def rotate_diagonal(self, diag: np.ndarray) -> np.ndarray:
        """Diagonal of ``theta @ diag(d) @ theta^H``."""
        return np.roll(np.asarray(diag), -self.delta_tau)


def shift_operator(tau_a: int, tau_b: int, size: int) -> ShiftOperator:
    """Operator ``F^H S_b^H S_a F`` for pilots with shifts ``tau_a`` and ``tau_b``."""
    if size < 1:
        raise ValueError(f"size must be positive, got {size}")
    return ShiftOperator((tau_a - tau_b) % size, size)
