import numpy as np
import pytest

from pdpalign.alignment import AlignmentPlan
from pdpalign.channel import ArrayConfig, LinkGeometry, SpatialScene, aggregate_tap_covariance
from pdpalign.estimation import per_tap_error_cov
from pdpalign.ofdm import unitary_dft

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def random_psd(rng, M, rank):
    X = rng.standard_normal((M, rank)) + 1j * rng.standard_normal((M, rank))
    return X @ X.conj().T


def scene_from_angles(angles, pdps, users_per_cell, spread=0.0, Q=1):
    """Hand-built scene: ``angles[(l, k, b)]`` is a length-L vector of path AoAs.

    Sub-paths are spread evenly over ``[center - spread/2, center + spread/2]``.
    """
    links = {}
    L = None
    for link, centers in angles.items():
        centers = np.asarray(centers, dtype=float)
        L = len(centers)
        offsets = np.linspace(-0.5, 0.5, Q) if Q > 1 else np.zeros(1)
        sub = centers[:, None] + spread * offsets
        pdp = pdps[link] if isinstance(pdps, dict) else pdps
        links[link] = LinkGeometry(centers, sub, pdp)
    return SpatialScene(links, spread, L, tuple(users_per_cell))


def linear_mmse_oracle(y, seqs, pdps, powers, sigma2, target):
    """Textbook LMMSE ``Cov(h, y) Cov(y)^-1 y`` and its error covariance, from dense matrices."""
    L = len(seqs[0])
    F = unitary_dft(L)
    cov_y = sigma2 * np.eye(L, dtype=complex)
    for s, d, rho in zip(seqs, pdps, powers):
        B = np.diag(s) @ F
        cov_y += rho * B @ np.diag(d.powers) @ B.conj().T
    B_u = np.diag(seqs[target]) @ F
    cross = np.sqrt(powers[target]) * np.diag(pdps[target].powers) @ B_u.conj().T
    err = np.diag(pdps[target].powers) - cross @ np.linalg.solve(cov_y, cross.conj().T)
    return cross @ np.linalg.solve(cov_y, y), err


def cn(rng, cov, n):
    """``n`` circular Gaussian draws with covariance ``cov`` (rows are samples)."""
    w, V = np.linalg.eigh(cov)
    root = V * np.sqrt(np.clip(w, 0, None))
    z = (rng.standard_normal((n, len(w))) + 1j * rng.standard_normal((n, len(w)))) / np.sqrt(2)
    return z @ root.T


def dense_cost(scene, shifts, array, budget, groups=None):
    """Sum over BS and taps of Tr(error with interference) - Tr(error without)."""
    plan = AlignmentPlan(shifts, tone_groups=groups)
    powers = {u: budget.power(*u) for u in shifts}
    blocks = [None] if groups is None else sorted(set(groups.values()))
    s2 = budget.noise_variance
    total = 0.0
    for g in blocks:
        for b in range(scene.n_cells):
            for n in range(scene.n_taps):
                own = aggregate_tap_covariance(scene, plan, b, b, n, powers, array, g)
                interf = [aggregate_tap_covariance(scene, plan, l, b, n, powers, array, g)
                          for l in range(scene.n_cells) if l != b]
                total += (np.trace(per_tap_error_cov(own, interf, s2))
                          - np.trace(per_tap_error_cov(own, None, s2))).real
    return total


def lex_argmin(costs: dict):
    """Key of the smallest cost; near-ties go to the lexicographically smallest key."""
    best = min(costs.values())
    return min(k for k, c in costs.items() if c <= best + 1e-9 * max(abs(best), 1e-12))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def small_array():
    return ArrayConfig(n_antennas=8)
