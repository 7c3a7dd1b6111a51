"""Monte-Carlo experiments comparing best alignment (BA), no alignment (NA)
and no inter-cell interference (NI) for the two shared-scatterer users.

Each run draws a new scene (second-order statistics), picks the plans,
then averages NMSE and downlink matched-filter spectral efficiency over
``realizations_per_run`` channel/noise draws shared by all schemes.
"""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .alignment import (AlignmentPlan, full_length_shifts, optimize_full_length,
                        optimize_tone_groups)
from .channel import (ArrayConfig, SharedScatterers, SpatialScene, Topology, User, draw_scene,
                      link_covariances, make_pdp, realize_cir)
from .estimation import LinkBudget, derotate_and_stack, per_tap_filter, pilot_observation
from .ofdm import OfdmConfig, base_sequence, shifted_sequence

log = logging.getLogger(__name__)

SCHEME_ORDER = ("BA", "NA", "NI")
OPTIMIZERS = ("tone_group", "full_length")


@dataclass
class ExperimentConfig:
    ofdm: OfdmConfig = field(default_factory=OfdmConfig)
    array: ArrayConfig = field(default_factory=ArrayConfig)
    users_per_cell: tuple[int, ...] = (1, 1)
    shared_pairs: tuple[SharedScatterers, ...] = (SharedScatterers((0, 0), (1, 0)),)
    pdp_kind: str = "exponential"
    sparse_support: tuple[int, ...] | None = None
    angle_spread_deg: float = 10.0
    n_subpaths: int = 20
    snr_db: float = 10.0
    n_runs: int = 1000
    realizations_per_run: int = 10
    schemes: tuple[str, ...] = SCHEME_ORDER
    optimizer: str = "tone_group"
    na_shifts: Mapping[User, int] | None = None
    master_seed: int = 2016
    n_jobs: int = 1

    def __post_init__(self):
        self.users_per_cell = tuple(int(k) for k in self.users_per_cell)
        self.schemes = tuple(self.schemes)
        if self.n_runs < 1:
            raise ValueError("n_runs must be at least 1")
        if self.realizations_per_run < 1:
            raise ValueError("realizations_per_run must be at least 1")
        if not self.schemes or any(s not in SCHEME_ORDER for s in self.schemes):
            raise ValueError(f"schemes must be a nonempty subset of {SCHEME_ORDER}")
        if self.optimizer not in OPTIMIZERS:
            raise ValueError(f"optimizer must be one of {OPTIMIZERS}")
        if not self.users_per_cell or min(self.users_per_cell) < 1:
            raise ValueError("every cell needs at least one user")

    @property
    def n_taps(self) -> int:
        """Delay-grid length the pilots live on."""
        return self.ofdm.n_cp if self.optimizer == "tone_group" else self.ofdm.n_tones

    def to_dict(self) -> dict:
        d = asdict(self)
        d["users_per_cell"] = list(self.users_per_cell)
        d["schemes"] = list(self.schemes)
        d["shared_pairs"] = [
            {"first": list(p.first), "second": list(p.second),
             "tap_map": None if p.tap_map is None else list(p.tap_map)}
            for p in self.shared_pairs
        ]
        d["sparse_support"] = None if self.sparse_support is None else list(self.sparse_support)
        d["na_shifts"] = None if self.na_shifts is None else {
            f"{l},{k}": t for (l, k), t in sorted(self.na_shifts.items())}
        return d

    @classmethod
    def from_dict(cls, data: Mapping) -> "ExperimentConfig":
        data = dict(data)
        unknown = set(data) - {f for f in cls.__dataclass_fields__}
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        if "ofdm" in data:
            data["ofdm"] = OfdmConfig(**data["ofdm"])
        if "array" in data:
            data["array"] = ArrayConfig(**data["array"])
        if "shared_pairs" in data:
            data["shared_pairs"] = tuple(
                SharedScatterers(tuple(p["first"]), tuple(p["second"]),
                                 None if p.get("tap_map") is None else tuple(p["tap_map"]))
                for p in data["shared_pairs"])
        if data.get("sparse_support") is not None:
            data["sparse_support"] = tuple(data["sparse_support"])
        if data.get("na_shifts") is not None:
            data["na_shifts"] = {tuple(int(x) for x in key.split(",")): int(v)
                                 for key, v in data["na_shifts"].items()}
        return cls(**data)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


@dataclass
class RunRecord:
    run_index: int
    scheme: str
    nmse_linear: float
    sum_se_bits_per_tone: float
    plan: AlignmentPlan | None = None

    @property
    def nmse_db(self) -> float:
        return 10 * math.log10(self.nmse_linear) if self.nmse_linear > 0 else -math.inf


def nmse(estimates, truths) -> float:
    """Total squared error over total channel energy."""
    est = [np.asarray(e) for e in (estimates if isinstance(estimates, (list, tuple)) else [estimates])]
    tru = [np.asarray(t) for t in (truths if isinstance(truths, (list, tuple)) else [truths])]
    if len(est) != len(tru) or any(e.shape != t.shape for e, t in zip(est, tru)):
        raise ValueError("estimates and truths must have matching shapes")
    energy = sum(float(np.sum(np.abs(t) ** 2)) for t in tru)
    if energy == 0:
        raise ValueError("NMSE undefined: true channels have zero energy")
    err = sum(float(np.sum(np.abs(e - t) ** 2)) for e, t in zip(est, tru))
    return err / energy


def sum_spectral_efficiency(true_channels: Mapping[tuple[User, int], np.ndarray],
                            estimates: Mapping[User, np.ndarray], noise_variance: float,
                            dl_power: float = 1.0) -> float:
    """Sum over users of the tone-averaged downlink rate under matched-filter precoding.

    ``true_channels[(user, b)]`` is the ``(..., tones, M)`` frequency response
    between ``user`` and BS ``b``; ``estimates[user]`` is its serving BS's
    estimate of the same quantity. Each BS splits ``dl_power`` equally among
    its users and steers ``conj(estimate) / ||estimate||`` on every tone.
    """
    users = sorted(estimates)
    per_bs = {}
    for l, _ in users:
        per_bs[l] = per_bs.get(l, 0) + 1
    precoders = {}
    for u in users:
        est = np.asarray(estimates[u])
        norm = np.linalg.norm(est, axis=-1, keepdims=True)
        with np.errstate(invalid="ignore", divide="ignore"):
            w = np.where(norm > 0, np.conj(est) / norm, 0.0)
        precoders[u] = w
    total = 0.0
    for u in users:
        desired = interference = 0.0
        for v in users:
            bs = v[0]
            gain = np.abs(np.sum(true_channels[(u, bs)] * precoders[v], axis=-1)) ** 2
            power = dl_power / per_bs[bs] * gain
            if v == u:
                desired = power
            else:
                interference = interference + power
        sinr = desired / (noise_variance + interference)
        total += float(np.mean(np.log2(1 + sinr)))
    return total


# ---------------------------------------------------------------------------
# one Monte-Carlo run


def build_topology(config: ExperimentConfig) -> Topology:
    return Topology(config.users_per_cell, config.n_taps, config.n_subpaths, config.shared_pairs)


def build_scene(config: ExperimentConfig, seed) -> SpatialScene:
    L = config.n_taps
    # per-tone channel gain of one, so snr_db is the per-tone receive SNR
    pdp = make_pdp(config.pdp_kind, L, config.ofdm.n_cp, total_power=float(L),
                   sparse_support=config.sparse_support)
    return draw_scene(seed, build_topology(config), np.deg2rad(config.angle_spread_deg), pdp)


def choose_plans(config: ExperimentConfig, scene: SpatialScene,
                 budget: LinkBudget) -> dict[str, AlignmentPlan]:
    ofdm = config.ofdm
    users = build_topology(config).users()
    if config.optimizer == "tone_group":
        best = optimize_tone_groups(scene, budget, config.array, ofdm.n_groups)
        groups = best.tone_groups
        na_shifts = {u: 0 for u in users}
    else:
        best = optimize_full_length(scene, budget, config.array, ofdm.n_cp)
        groups = None
        na_shifts = full_length_shifts([0] * len(config.users_per_cell),
                                       config.users_per_cell, ofdm.n_cp, ofdm.n_tones)
    if config.na_shifts is not None:
        na_shifts.update(config.na_shifts)
    none = AlignmentPlan(na_shifts, best.scheme, groups)
    return {"BA": best, "NA": none, "NI": best}


def _seeds(config: ExperimentConfig, run_index: int):
    ss = np.random.SeedSequence([config.master_seed, run_index])
    return ss.spawn(2)


def simulate_run(config: ExperimentConfig, run_index: int) -> list[RunRecord]:
    """All requested schemes for one geometry draw."""
    geo_seed, real_seed = _seeds(config, run_index)
    scene = build_scene(config, geo_seed)
    budget = LinkBudget.from_snr_db(config.snr_db)
    plans = choose_plans(config, scene, budget)
    rng = np.random.default_rng(real_seed)
    L, M, R = config.n_taps, config.array.n_antennas, config.realizations_per_run
    sigma2 = budget.noise_variance
    topology = build_topology(config)
    users = topology.users()
    cells = range(topology.n_cells)

    cir = {(l, k, b): realize_cir(scene, l, k, b, config.array, rng, R)
           for l, k, b in topology.links()}
    covs = {link: link_covariances(scene, *link, config.array) for link in topology.links()}
    n_blocks = config.ofdm.n_groups if config.optimizer == "tone_group" else 1
    noise = np.sqrt(sigma2 / 2) * (rng.standard_normal((n_blocks, len(cells), R, M, L))
                                   + 1j * rng.standard_normal((n_blocks, len(cells), R, M, L)))
    freq = {link: np.swapaxes(np.fft.fft(h, axis=-1), -1, -2) / np.sqrt(L)
            for link, h in cir.items()}  # (R, L tones, M)
    base = base_sequence(L)

    records = []
    for scheme in SCHEME_ORDER:
        if scheme not in config.schemes:
            continue
        plan = plans[scheme]
        err = energy = 0.0
        se = 0.0
        for block_index, (group, block) in enumerate(sorted(plan.blocks().items(),
                                                            key=lambda kv: (kv[0] is None, kv[0]))):
            noise_slot = group if group is not None else 0
            estimates = {}
            for b in sorted({l for l, _ in block}):
                y = noise[noise_slot, b].copy()
                c_own = np.zeros((L, M, M), dtype=complex)
                c_int = np.zeros((L, M, M), dtype=complex)
                truth = np.zeros((R, L, M), dtype=complex)
                for l, k in block:
                    if scheme == "NI" and l != b:
                        continue
                    rho = budget.power(l, k)
                    tau = plan.shifts[(l, k)]
                    pilot = shifted_sequence(base, tau)
                    y = y + pilot_observation(cir[(l, k, b)], pilot, rho)
                    idx = (np.arange(L) + tau) % L
                    if l == b:
                        c_own += rho * covs[(l, k, b)][idx]
                        truth += np.sqrt(rho) * np.swapaxes(cir[(l, k, b)], -1, -2)[:, idx]
                    else:
                        c_int += rho * covs[(l, k, b)][idx]
                G = derotate_and_stack(y, base)
                W = per_tap_filter(c_own, c_int, sigma2)
                est = np.einsum("lij,rlj->rli", W, G)
                err += float(np.sum(np.abs(est - truth) ** 2))
                energy += float(np.sum(np.abs(truth) ** 2))
                for l, k in block:
                    if l != b:
                        continue
                    estimates[(l, k)] = _user_response(est, scene, plan, l, k, budget.power(l, k))
            true_resp = {((l, k), b): freq[(l, k, b)] for l, k in block for b in cells}
            se += sum_spectral_efficiency(true_resp, estimates, sigma2, dl_power=budget.power(0, 0))
        records.append(RunRecord(run_index, scheme, err / energy, se, plan))
    return records


def _user_response(est_agg: np.ndarray, scene: SpatialScene, plan: AlignmentPlan,
                   l: int, k: int, rho: float) -> np.ndarray:
    """Undo the cyclic shift and return one user's estimated frequency response."""
    L = scene.n_taps
    tau = plan.shifts[(l, k)]
    mask = scene.pdp(l, k, l).powers > 0
    taps = np.roll(est_agg, tau, axis=-2) * mask[:, None] / np.sqrt(rho)  # (R, L, M)
    return np.fft.fft(taps, axis=-2) / np.sqrt(L)


def _run_safe(config: ExperimentConfig, run_index: int) -> list[RunRecord]:
    try:
        return simulate_run(config, run_index)
    except Exception as exc:
        raise RuntimeError(f"Monte-Carlo run {run_index} failed: {exc}") from exc


def run_experiment(config: ExperimentConfig) -> list[RunRecord]:
    """Run every Monte-Carlo run; records sorted by run index, then scheme."""
    if config.n_jobs == 1:
        nested = [_run_safe(config, i) for i in range(config.n_runs)]
    else:
        from joblib import Parallel, delayed

        nested = Parallel(n_jobs=config.n_jobs)(
            delayed(_run_safe)(config, i) for i in range(config.n_runs))
    records = [r for run in nested for r in run]
    records.sort(key=lambda r: (r.run_index, SCHEME_ORDER.index(r.scheme)))
    return records


# ---------------------------------------------------------------------------
# results


def nearest_rank_percentiles(values: Sequence[float], percents=range(1, 100)) -> list[float]:
    data = sorted(values)
    if not data:
        return []
    n = len(data)
    return [data[max(1, math.ceil(p / 100 * n)) - 1] for p in percents]


def summarize(records: Sequence[RunRecord]) -> dict:
    out = {}
    for scheme in SCHEME_ORDER:
        rows = [r for r in records if r.scheme == scheme]
        if not rows:
            continue
        out[scheme] = {
            "n_runs": len(rows),
            "nmse_db": nearest_rank_percentiles([r.nmse_db for r in rows]),
            "sum_se": nearest_rank_percentiles([r.sum_se_bits_per_tone for r in rows]),
        }
    return out


def median(records: Sequence[RunRecord], scheme: str, metric: str = "nmse_db") -> float:
    attr = "sum_se_bits_per_tone" if metric == "sum_se" else metric
    return nearest_rank_percentiles([getattr(r, attr) for r in records if r.scheme == scheme],
                                    [50])[0]


def _fmt(x: float) -> str:
    return f"{x:.9g}"


def emit_results(records: Sequence[RunRecord], path, fmt: str = "csv",
                 config: ExperimentConfig | None = None) -> Path:
    """Write per-run rows (csv) or a percentile summary (json)."""
    path = Path(path)
    rows = sorted(records, key=lambda r: (r.run_index, SCHEME_ORDER.index(r.scheme)))
    try:
        if fmt == "csv":
            with open(path, "w", newline="") as fh:
                writer = csv.writer(fh, lineterminator="\n")
                writer.writerow(["run", "scheme", "nmse_db", "sum_se"])
                for r in rows:
                    writer.writerow([r.run_index, r.scheme, _fmt(r.nmse_db),
                                     _fmt(r.sum_se_bits_per_tone)])
        elif fmt == "json":
            summary = {
                "master_seed": None if config is None else config.master_seed,
                "config": None if config is None else config.to_dict(),
                "percent_points": list(range(1, 100)),
                "percentiles": {
                    scheme: {key: ([float(_fmt(v)) for v in vals] if isinstance(vals, list) else vals)
                             for key, vals in table.items()}
                    for scheme, table in summarize(rows).items()
                },
            }
            with open(path, "w") as fh:
                json.dump(summary, fh, indent=2)
        else:
            raise ValueError(f"unknown output format {fmt!r}")
    except OSError as exc:
        raise OSError(f"cannot write results to {path}: {exc}") from exc
    return path


def load_summary(path) -> dict:
    with open(path) as fh:
        return json.load(fh)


def with_overrides(config: ExperimentConfig, **changes) -> ExperimentConfig:
    return replace(config, **changes)
