"""Cyclic-shift assignment: intra-cell orthogonality and inter-cell PDP alignment.

The decision variable is one cyclic shift per user. Users of one cell must
keep their shifted profiles disjoint (or sit on different tone groups); the
objective is the summed trace of the residual matrices at every BS and tap.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .channel import ArrayConfig, PowerDelayProfile, SpatialScene, User, steering_vector
from .estimation import LinkBudget

SCHEMES = ("exhaustive", "full_length", "tone_group")
DEFAULT_MAX_PLANS = 100_000
TIE_RTOL = 1e-9


class AlignmentError(Exception):
    pass


class ConstraintViolation(AlignmentError, ValueError):
    """A plan breaks intra-cell orthogonality."""


class SearchTooLarge(AlignmentError):
    """Exhaustive grid above the configured cap."""


class CapacityError(AlignmentError, ValueError):
    """More users in a cell than orthogonal resources."""


@dataclass(frozen=True)
class AlignmentPlan:
    """Cyclic shift (and optional tone group) of every user ``(l, k)``; all indices 0-based."""

    shifts: Mapping[User, int]
    scheme: str = "exhaustive"
    tone_groups: Mapping[User, int] | None = None

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}")
        object.__setattr__(self, "shifts", {tuple(u): int(t) for u, t in self.shifts.items()})
        if self.tone_groups is not None:
            object.__setattr__(self, "tone_groups",
                               {tuple(u): int(g) for u, g in self.tone_groups.items()})

    def group_of(self, l: int, k: int) -> int | None:
        if self.tone_groups is None:
            return None
        return self.tone_groups[(l, k)]

    def blocks(self) -> dict[int | None, list[User]]:
        """Users grouped by the tone resources they share."""
        out: dict[int | None, list[User]] = {}
        for u in sorted(self.shifts):
            out.setdefault(self.group_of(*u), []).append(u)
        return out

    def shift_tuple(self) -> tuple[int, ...]:
        return tuple(self.shifts[u] for u in sorted(self.shifts))

    def to_dict(self) -> dict:
        key = lambda u: f"{u[0]},{u[1]}"
        return {
            "scheme": self.scheme,
            "shifts": {key(u): t for u, t in sorted(self.shifts.items())},
            "tone_groups": None if self.tone_groups is None
            else {key(u): g for u, g in sorted(self.tone_groups.items())},
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "AlignmentPlan":
        def parse(d):
            return {tuple(int(x) for x in key.split(",")): int(v) for key, v in d.items()}

        groups = data.get("tone_groups")
        return cls(parse(data["shifts"]), data.get("scheme", "exhaustive"),
                   None if groups is None else parse(groups))

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_json(cls, text: str) -> "AlignmentPlan":
        return cls.from_dict(json.loads(text))


@dataclass
class AlignmentCost:
    total: float
    per_cell_per_tap: dict = field(default_factory=dict)  # group -> (B, L) array


def pdp_orthogonal(pdp_a: PowerDelayProfile, pdp_b: PowerDelayProfile, delta_tau: int,
                   length: int | None = None) -> bool:
    """True when ``pdp_b`` shifted cyclically by ``-delta_tau`` misses the support of ``pdp_a``."""
    L = pdp_a.n_taps if length is None else length
    if pdp_a.n_taps != L or pdp_b.n_taps != L:
        raise ValueError("profiles must live on the same delay grid")
    shifted = {(t - delta_tau) % L for t in pdp_b.support}
    return not (pdp_a.support & shifted)


def max_orthogonal_packing(pdps: Sequence[PowerDelayProfile],
                           length: int | None = None) -> list[int] | None:
    """Greedy first-fit shifts making every pair of profiles orthogonal.

    Returns ``None`` when the greedy pass cannot place a profile.
    """
    if not pdps:
        raise ValueError("need at least one profile")
    L = pdps[0].n_taps if length is None else length
    occupied: set[int] = set()
    shifts = []
    for pdp in pdps:
        for tau in range(L):
            taps = {(t - tau) % L for t in pdp.support}
            if not taps & occupied:
                occupied |= taps
                shifts.append(tau)
                break
        else:
            return None
    return shifts


def plan_violations(plan: AlignmentPlan, scene: SpatialScene) -> list[str]:
    """Human-readable list of intra-cell orthogonality violations (empty if feasible)."""
    L = scene.n_taps
    problems = []
    for b, K in enumerate(scene.users_per_cell):
        for k in range(K):
            if (b, k) not in plan.shifts:
                problems.append(f"user ({b},{k}) has no shift")
            elif not 0 <= plan.shifts[(b, k)] < L:
                problems.append(f"user ({b},{k}) shift {plan.shifts[(b, k)]} outside [0, {L - 1}]")
        if problems:
            continue
        for u, k in itertools.combinations(range(K), 2):
            if plan.group_of(b, u) != plan.group_of(b, k):
                continue
            delta = plan.shifts[(b, k)] - plan.shifts[(b, u)]
            if not pdp_orthogonal(scene.pdp(b, u, b), scene.pdp(b, k, b), delta, L):
                problems.append(f"cell {b}: users {u} and {k} overlap at relative shift {delta % L}")
    return problems


def check_plan(plan: AlignmentPlan, scene: SpatialScene) -> None:
    problems = plan_violations(plan, scene)
    if problems:
        raise ConstraintViolation("; ".join(problems))


class CostEvaluator:
    """Caches tap covariances and residual traces of one scene.

    Residual traces are keyed by the contributing ``(user, tap)`` pairs, so
    plans that produce the same aggregate taps never recompute them.
    """

    def __init__(self, scene: SpatialScene, budget: LinkBudget, array: ArrayConfig):
        self.scene = scene
        self.budget = budget
        self.array = array
        self._cov: dict = {}
        self._trace: dict = {}
        self._supports = {link: g.pdp.support for link, g in scene.links.items()}

    def _factor(self, l, k, b):
        """Per-tap square-root factors ``(L, M, Q)`` with ``C_t = F_t F_t^H``."""
        key = (l, k, b)
        if key not in self._cov:
            geom = self.scene.links[key]
            A = np.swapaxes(steering_vector(geom.subpath_aoa, self.array), -1, -2)
            Q = A.shape[-1]
            scale = np.sqrt(self.budget.power(l, k) * geom.pdp.powers / Q)
            self._cov[key] = A * scale[:, None, None]
        return self._cov[key]

    def _support(self, l, k, b):
        return self._supports[(l, k, b)]

    def _keys(self, users: Sequence[User], shifts: Sequence[int]):
        """Residual keys for every (BS, tap) of one block under ``shifts``."""
        L = self.scene.n_taps
        cells = sorted({l for l, _ in users})
        out = []
        for b in cells:
            for n in range(L):
                own, interf = [], []
                for (l, k), tau in zip(users, shifts):
                    t = (n + tau) % L
                    if t in self._support(l, k, b):
                        (own if l == b else interf).append((l, k, t))
                out.append((b, n, (b, tuple(own), tuple(interf)) if own and interf else None))
        return out

    def _fill(self, keys):
        missing = sorted({key for key in keys if key is not None and key not in self._trace})
        # batch keys whose stacked factors have equal widths
        by_shape: dict = {}
        for key in missing:
            by_shape.setdefault((len(key[1]), len(key[2])), []).append(key)
        for batch in by_shape.values():
            own = np.stack([np.concatenate([self._factor(l, k, b)[t] for l, k, t in o], axis=-1)
                            for b, o, _ in batch])
            interf = np.stack([np.concatenate([self._factor(l, k, b)[t] for l, k, t in i], axis=-1)
                               for b, _, i in batch])
            traces = _residual_trace_lowrank(own, interf, self.budget.noise_variance)
            self._trace.update(zip(batch, traces.tolist()))

    def block_costs(self, users: Sequence[User], shift_grid: Iterable[Sequence[int]]) -> np.ndarray:
        grid = list(shift_grid)
        keys = [[key for _, _, key in self._keys(users, s)] for s in grid]
        self._fill(itertools.chain.from_iterable(keys))
        return np.array([sum(self._trace[k] for k in ks if k is not None) for ks in keys])

    def block_breakdown(self, users: Sequence[User], shifts: Sequence[int]) -> np.ndarray:
        B, L = self.scene.n_cells, self.scene.n_taps
        entries = self._keys(users, shifts)
        self._fill(key for _, _, key in entries)
        out = np.zeros((B, L))
        for b, n, key in entries:
            if key is not None:
                out[b, n] = self._trace[key]
        return out

    def cost(self, plan: AlignmentPlan) -> AlignmentCost:
        check_plan(plan, self.scene)
        breakdown = {}
        for group, users in plan.blocks().items():
            breakdown[group] = self.block_breakdown(users, [plan.shifts[u] for u in users])
        total = float(sum(arr.sum() for arr in breakdown.values()))
        return AlignmentCost(total, breakdown)


def alignment_cost(plan: AlignmentPlan, scene: SpatialScene, budget: LinkBudget,
                   array: ArrayConfig) -> AlignmentCost:
    """Summed residual-matrix traces over all BSs and taps under ``plan``."""
    return CostEvaluator(scene, budget, array).cost(plan)


def _residual_trace_lowrank(own: np.ndarray, interf: np.ndarray, noise_variance: float) -> np.ndarray:
    """Residual trace from square-root factors (``C_own = B B^H``, ``C_interf = D D^H``).

    Works in the span of ``E = [B, D]`` through its Gram matrix ``G = E^H E``:
    ``Tr R = sigma^2 * (Tr([(sigma^2 + G)^{-1}]_oo G_oo) - Tr((sigma^2 + G_oo)^{-1} G_oo))``.
    """
    q = own.shape[-1]
    E = np.concatenate([own, interf], axis=-1)
    G = np.conj(np.swapaxes(E, -1, -2)) @ E
    G_oo = G[..., :q, :q]
    eye = np.eye(G.shape[-1])
    with_i = np.linalg.solve(noise_variance * eye + G, np.eye(G.shape[-1], q))[..., :q, :]
    without = np.linalg.solve(noise_variance * np.eye(q) + G_oo, G_oo)
    t_with = np.einsum("...ij,...ji->...", with_i, G_oo).real
    t_without = np.trace(without, axis1=-2, axis2=-1).real
    return noise_variance * (t_with - t_without)


def _argmin_lex(costs: np.ndarray, grid: Sequence[tuple[int, ...]]) -> int:
    """Index of the minimum; near-ties go to the lexicographically smallest tuple."""
    best = float(np.min(costs))
    tol = TIE_RTOL * max(abs(best), 1e-12)
    ties = [i for i in np.flatnonzero(costs <= best + tol)]
    return min(ties, key=lambda i: tuple(grid[i]))


def _intra_cell_ok(users, shifts, scene) -> bool:
    L = scene.n_taps
    for (i, (l1, k1)), (j, (l2, k2)) in itertools.combinations(enumerate(users), 2):
        if l1 == l2 and not pdp_orthogonal(scene.pdp(l1, k1, l1), scene.pdp(l2, k2, l2),
                                           shifts[j] - shifts[i], L):
            return False
    return True


def _solve_block(evaluator, users, domains, pin_first=False, chunk=20_000):
    """Enumerate ``domains`` for ``users``; return the best feasible shift tuple and its cost."""
    scene = evaluator.scene
    if pin_first:
        domains = [[0]] + list(domains[1:])
    best = None
    for batch in _chunks(itertools.product(*domains), chunk):
        feasible = [s for s in batch if _intra_cell_ok(users, s, scene)]
        if not feasible:
            continue
        costs = evaluator.block_costs(users, feasible)
        i = _argmin_lex(costs, feasible)
        cand = (float(costs[i]), feasible[i])
        if best is None:
            best = cand
        else:
            pair = np.array([best[0], cand[0]])
            best = [best, cand][_argmin_lex(pair, [best[1], cand[1]])]
    if best is None:
        raise ConstraintViolation("no shift assignment satisfies intra-cell orthogonality")
    return best[1], best[0]


def _chunks(iterable, size):
    it = iter(iterable)
    while batch := list(itertools.islice(it, size)):
        yield batch


def optimize_exhaustive(scene: SpatialScene, budget: LinkBudget, array: ArrayConfig,
                        shift_domains: Mapping[User, Iterable[int]] | None = None,
                        tone_groups: Mapping[User, int] | None = None,
                        max_plans: int = DEFAULT_MAX_PLANS) -> AlignmentPlan:
    """Minimum-cost feasible plan over the full shift grid.

    ``shift_domains`` restricts the shifts tried per user (default: every
    shift of the delay grid). Tone groups, if given, are held fixed.
    """
    users = [(l, k) for l, K in enumerate(scene.users_per_cell) for k in range(K)]
    L = scene.n_taps
    domains = [sorted(set(shift_domains[u])) if shift_domains else list(range(L)) for u in users]
    size = math.prod(len(d) for d in domains)
    if size > max_plans:
        raise SearchTooLarge(f"exhaustive grid has {size} plans (cap {max_plans}); "
                             "use optimize_full_length or optimize_tone_groups")
    evaluator = CostEvaluator(scene, budget, array)
    probe = AlignmentPlan({u: 0 for u in users}, "exhaustive", tone_groups)
    blocks = probe.blocks()
    shifts = {}
    if len(blocks) == 1:
        best, _ = _solve_block(evaluator, users, domains)
        shifts.update(zip(users, best))
    else:
        # separate tone groups never interact, so each block is searched alone
        for block_users in blocks.values():
            idx = [users.index(u) for u in block_users]
            best, _ = _solve_block(evaluator, block_users, [domains[i] for i in idx])
            shifts.update(zip(block_users, best))
    return AlignmentPlan(shifts, "exhaustive", tone_groups)


def full_length_shifts(cell_shifts: Sequence[int], users_per_cell: Sequence[int],
                       n_cp: int, length: int) -> dict[User, int]:
    """``tau_{l,k} = tau_l + k * n_cp (mod length)`` for 0-based user ``k``."""
    return {(l, k): (cell_shifts[l] + k * n_cp) % length
            for l, K in enumerate(users_per_cell) for k in range(K)}


def optimize_full_length(scene: SpatialScene, budget: LinkBudget, array: ArrayConfig,
                         n_cp: int, shift_step: int = 1) -> AlignmentPlan:
    """Search one base shift per cell; users of a cell are spaced ``n_cp`` apart.

    Cell 0's base shift is pinned to 0: the cost is invariant to a common
    cyclic shift of every user, and the pinned tuple is the lexicographically
    smallest member of each equivalence class.
    """
    L = scene.n_taps
    capacity = L // n_cp
    for l, K in enumerate(scene.users_per_cell):
        if K > capacity:
            raise CapacityError(f"cell {l} has {K} users, at most {capacity} fit")
    users = [(l, k) for l, K in enumerate(scene.users_per_cell) for k in range(K)]
    B = scene.n_cells
    evaluator = CostEvaluator(scene, budget, array)
    grid = [(0,) + rest for rest in itertools.product(range(0, L, shift_step), repeat=B - 1)]
    feasible, expanded = [], []
    for cell_shifts in grid:
        s = full_length_shifts(cell_shifts, scene.users_per_cell, n_cp, L)
        tup = tuple(s[u] for u in users)
        if _intra_cell_ok(users, tup, scene):
            feasible.append(cell_shifts)
            expanded.append(tup)
    if not feasible:
        raise ConstraintViolation("profiles exceed n_cp taps; full-length spacing is not orthogonal")
    costs = evaluator.block_costs(users, expanded)
    best = feasible[_argmin_lex(costs, feasible)]
    return AlignmentPlan(full_length_shifts(best, scene.users_per_cell, n_cp, L), "full_length")


def optimize_tone_groups(scene: SpatialScene, budget: LinkBudget, array: ArrayConfig,
                         n_groups: int, allocation: Mapping[User, int] | None = None,
                         swap_pass: bool = False) -> AlignmentPlan:
    """Per-tone-group alignment on a length-``n_cp`` delay grid (``scene.n_taps``).

    Default allocation puts user ``k`` of every cell on group ``k``. Each
    group's shifts are found by full enumeration, independently of the other
    groups. ``swap_pass`` additionally hill-climbs over per-cell swaps of the
    group allocation.
    """
    for l, K in enumerate(scene.users_per_cell):
        if K > n_groups:
            raise CapacityError(f"cell {l} has {K} users but only {n_groups} tone groups")
    users = [(l, k) for l, K in enumerate(scene.users_per_cell) for k in range(K)]
    groups = dict(allocation) if allocation is not None else {(l, k): k for l, k in users}
    for l in range(scene.n_cells):
        mine = [groups[(l, k)] for k in range(scene.users_per_cell[l])]
        if len(set(mine)) != len(mine) or any(not 0 <= g < n_groups for g in mine):
            raise CapacityError(f"cell {l} allocation {mine} is not one user per group")
    evaluator = CostEvaluator(scene, budget, array)
    L = scene.n_taps

    def solve(groups):
        shifts, total = {}, 0.0
        by_group: dict[int, list[User]] = {}
        for u in users:
            by_group.setdefault(groups[u], []).append(u)
        for g in sorted(by_group):
            block = by_group[g]
            best, cost = _solve_block(evaluator, block, [range(L)] * len(block))
            shifts.update(zip(block, best))
            total += cost
        return shifts, total

    shifts, total = solve(groups)
    if swap_pass:
        improved = True
        while improved:
            improved = False
            for l in range(scene.n_cells):
                for u, v in itertools.combinations(range(scene.users_per_cell[l]), 2):
                    trial = dict(groups)
                    trial[(l, u)], trial[(l, v)] = groups[(l, v)], groups[(l, u)]
                    s, c = solve(trial)
                    if c < total * (1 - TIE_RTOL) - 1e-15:
                        groups, shifts, total, improved = trial, s, c, True
    return AlignmentPlan(shifts, "tone_group", groups)
