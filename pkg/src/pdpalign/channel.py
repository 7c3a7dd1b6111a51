"""Power-delay profiles and a per-tap spatial channel model for a ULA.

Every resolvable delay tap is one scatterer made of ``Q`` sub-paths whose
angles of arrival are spread uniformly around a path center. Tap spatial
covariances are conditioned on the drawn angles, i.e. averaged only over the
sub-path phases.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

Link = tuple[int, int, int]  # (cell l, user k, observing BS b)
User = tuple[int, int]


@dataclass(frozen=True, eq=False)
class PowerDelayProfile:
    """Average tap powers on a delay grid of ``len(powers)`` taps."""

    powers: np.ndarray

    def __post_init__(self):
        powers = np.asarray(self.powers, dtype=float)
        if powers.ndim != 1 or len(powers) == 0:
            raise ValueError("powers must be a non-empty vector")
        if np.any(powers < 0):
            raise ValueError("tap powers must be nonnegative")
        powers.setflags(write=False)
        object.__setattr__(self, "powers", powers)

    @property
    def n_taps(self) -> int:
        return len(self.powers)

    @property
    def support(self) -> frozenset[int]:
        return frozenset(np.flatnonzero(self.powers > 0).tolist())

    @property
    def delay_spread(self) -> int:
        """Index of the last nonzero tap plus one."""
        nz = np.flatnonzero(self.powers)
        return int(nz[-1]) + 1 if len(nz) else 0

    @property
    def total_power(self) -> float:
        return float(self.powers.sum())

    def rolled(self, delta: int) -> "PowerDelayProfile":
        """Profile cyclically shifted by ``-delta`` taps (what a relative shift ``delta`` does)."""
        return PowerDelayProfile(np.roll(self.powers, -delta))


def make_pdp(kind: str, n_tones: int, n_cp: int, total_power: float = 1.0,
             sparse_support=None, decay: float = 0.6) -> PowerDelayProfile:
    """Build a uniform, exponential or sparse profile on an ``n_tones`` grid.

    Nonzero taps lie in ``[0, n_cp - 1]``. Powers are scaled to sum to
    ``total_power``.
    """
    if total_power <= 0:
        raise ValueError("total_power must be positive")
    if not 1 <= n_cp <= n_tones:
        raise ValueError(f"need 1 <= n_cp <= n_tones, got n_cp={n_cp}, n_tones={n_tones}")
    shape = np.zeros(n_tones)
    if kind == "uniform":
        shape[:n_cp] = 1.0
    elif kind == "exponential":
        shape[:n_cp] = np.exp(-decay * np.arange(n_cp))
    elif kind == "sparse":
        support = sorted(set(sparse_support or ()))
        if not support:
            raise ValueError("sparse profile needs a nonempty support")
        if support[0] < 0 or support[-1] >= n_cp:
            raise ValueError(f"sparse support must lie in [0, {n_cp - 1}]")
        shape[support] = 1.0
    else:
        raise ValueError(f"unknown PDP kind {kind!r}")
    return PowerDelayProfile(shape * (total_power / shape.sum()))


@dataclass(frozen=True)
class ArrayConfig:
    """Uniform linear array at the base station."""

    n_antennas: int = 50
    spacing_over_wavelength: float = 0.5

    def __post_init__(self):
        if self.n_antennas < 1:
            raise ValueError("n_antennas must be positive")
        if not 0 < self.spacing_over_wavelength < 0.5 + 1e-12:
            raise ValueError("antenna spacing must be in (0, lambda/2]")


def steering_vector(theta, array: ArrayConfig) -> np.ndarray:
    """ULA response ``a[m] = exp(-2j*pi*m*(D/lambda)*cos(theta))``.

    ``theta`` may be an array; the antenna axis is appended last.
    """
    m = np.arange(array.n_antennas)
    phase = np.multiply.outer(np.cos(theta), m) * array.spacing_over_wavelength
    return np.exp(-2j * np.pi * phase)


@dataclass(frozen=True)
class SharedScatterers:
    """Two users that see the same scatterers toward every BS.

    Tap ``n`` of ``second`` reuses the scatterer of tap ``tap_map[n]`` of
    ``first``. ``None`` means the identity map.
    """

    first: User
    second: User
    tap_map: tuple[int, ...] | None = None


@dataclass(frozen=True)
class Topology:
    users_per_cell: tuple[int, ...]
    n_taps: int
    n_subpaths: int = 20
    shared: tuple[SharedScatterers, ...] = ()

    @property
    def n_cells(self) -> int:
        return len(self.users_per_cell)

    def users(self) -> list[User]:
        return [(l, k) for l, K in enumerate(self.users_per_cell) for k in range(K)]

    def links(self) -> list[Link]:
        return [(l, k, b) for l, k in self.users() for b in range(self.n_cells)]


@dataclass(frozen=True, eq=False)
class LinkGeometry:
    """Scatterer angles of one user toward one BS, one row per delay tap."""

    center_aoa: np.ndarray  # (L,)
    subpath_aoa: np.ndarray  # (L, Q)
    pdp: PowerDelayProfile


@dataclass(frozen=True, eq=False)
class SpatialScene:
    links: Mapping[Link, LinkGeometry]
    angle_spread: float
    n_taps: int
    users_per_cell: tuple[int, ...] = field(default=())

    def pdp(self, l: int, k: int, b: int) -> PowerDelayProfile:
        return self.links[(l, k, b)].pdp

    @property
    def n_cells(self) -> int:
        return len(self.users_per_cell)


def draw_scene(rng_seed, topology: Topology, as_value: float, pdps) -> SpatialScene:
    """Draw path-center AoAs and sub-path AoAs for every link.

    ``pdps`` is either one profile used for every link or a mapping from
    ``(l, k, b)`` to a profile. Sub-path angles are ``center + as_value * u``
    with ``u ~ U[-1/2, 1/2]``, so scenes drawn with the same seed but a
    different spread share their centers and offsets.
    """
    if as_value < 0:
        raise ValueError("angle spread must be nonnegative")
    L, Q = topology.n_taps, topology.n_subpaths
    rng = np.random.default_rng(rng_seed)
    eps = 1e-6
    raw = {}
    # fixed draw order keeps scenes reproducible regardless of sharing
    for link in topology.links():
        center = rng.uniform(eps, np.pi - eps, size=L)
        offsets = rng.uniform(-0.5, 0.5, size=(L, Q))
        raw[link] = (center, offsets)
    for pair in topology.shared:
        tap_map = np.arange(L) if pair.tap_map is None else np.asarray(pair.tap_map)
        if len(tap_map) != L:
            raise ValueError("tap_map length must equal n_taps")
        for b in range(topology.n_cells):
            center, offsets = raw[(*pair.first, b)]
            raw[(*pair.second, b)] = (center[tap_map], offsets[tap_map])

    links = {}
    for link, (center, offsets) in raw.items():
        pdp = pdps if isinstance(pdps, PowerDelayProfile) else pdps[link]
        if pdp.n_taps != L:
            raise ValueError(f"profile for {link} has {pdp.n_taps} taps, expected {L}")
        sub = np.clip(center[:, None] + as_value * offsets, eps, np.pi - eps)
        for arr in (center, sub):
            arr.setflags(write=False)
        links[link] = LinkGeometry(center, sub, pdp)
    return SpatialScene(links, as_value, L, tuple(topology.users_per_cell))


def _steering_matrix(geom: LinkGeometry, n: int, array: ArrayConfig) -> np.ndarray:
    return steering_vector(geom.subpath_aoa[n], array).T  # (M, Q)


def tap_covariance(scene: SpatialScene, l: int, k: int, b: int, n: int,
                   array: ArrayConfig) -> np.ndarray:
    """``(P_n / Q) * sum_q a(theta_q) a(theta_q)^H`` for tap ``n`` of link (l, k, b)."""
    geom = scene.links[(l, k, b)]
    p = geom.pdp.powers[n % scene.n_taps]
    M = array.n_antennas
    if p == 0:
        return np.zeros((M, M), dtype=complex)
    A = _steering_matrix(geom, n % scene.n_taps, array)
    return (p / A.shape[1]) * (A @ A.conj().T)


def link_covariances(scene: SpatialScene, l: int, k: int, b: int,
                     array: ArrayConfig) -> np.ndarray:
    """All tap covariances of one link, shape ``(L, M, M)``."""
    geom = scene.links[(l, k, b)]
    A = np.swapaxes(steering_vector(geom.subpath_aoa, array), -1, -2)  # (L, M, Q)
    Q = A.shape[-1]
    cov = A @ np.conj(np.swapaxes(A, -1, -2))
    return cov * (geom.pdp.powers / Q)[:, None, None]


def aggregate_tap_covariance(scene: SpatialScene, plan, l: int, b: int, n: int,
                             powers, array: ArrayConfig, group=None) -> np.ndarray:
    """Covariance of tap ``n`` of cell ``l``'s aggregate channel seen at BS ``b``.

    ``powers`` maps ``(l, k)`` to the per-tone power (a scalar applies to all).
    When ``group`` is given only users assigned to that tone group contribute.
    """
    M = array.n_antennas
    L = scene.n_taps
    total = np.zeros((M, M), dtype=complex)
    for k in range(scene.users_per_cell[l]):
        if group is not None and plan.group_of(l, k) != group:
            continue
        rho = _power(powers, l, k)
        tau = plan.shifts[(l, k)]
        total += rho * tap_covariance(scene, l, k, b, (n + tau) % L, array)
    return total


def _power(powers, l, k) -> float:
    if np.isscalar(powers):
        return float(powers)
    return float(powers[(l, k)])


def realize_cir(scene: SpatialScene, l: int, k: int, b: int, array: ArrayConfig,
                rng_seed=None, n_realizations: int | None = None) -> np.ndarray:
    """Random channel impulse response with fresh sub-path phases.

    Returns an ``(M, L)`` matrix (one column per tap), or
    ``(n_realizations, M, L)`` when ``n_realizations`` is given. ``rng_seed``
    may also be a ``numpy.random.Generator``.
    """
    rng = rng_seed if isinstance(rng_seed, np.random.Generator) else np.random.default_rng(rng_seed)
    geom = scene.links[(l, k, b)]
    A = steering_vector(geom.subpath_aoa, array)  # (L, Q, M)
    L, Q, _ = A.shape
    shape = (1 if n_realizations is None else n_realizations, L, Q)
    phases = np.exp(1j * rng.uniform(0.0, 2 * np.pi, size=shape))
    amp = np.sqrt(geom.pdp.powers / Q)
    h = np.einsum("rlq,lqm->rml", phases, A) * amp
    return h[0] if n_realizations is None else h
