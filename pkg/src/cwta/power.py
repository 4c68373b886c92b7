"""Monte Carlo power estimation, (HR, SS) grids and sample-size interpolation.

Replication ``r`` of a cell draws its trial seed from
``SeedSequence([seed, ss, hr_eff, hr_tox, r])``; results therefore depend on
nothing but the arguments, whatever the worker count.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, replace
from typing import Iterable, Sequence

import numpy as np
from scipy.optimize import isotonic_regression

from .errors import ConfigError, TargetNotBracketed
from .sim import SimConfig, flat_endpoints, simulate_states
from .stats import weighted_logrank

ENDPOINTS = ("rba", "efficacy_only")


@dataclass(frozen=True)
class PowerPoint:
    hr_efficacy: float
    hr_toxicity: float
    sample_size: int
    replications: int
    alpha: float
    power: float
    endpoint: str = "rba"

    @property
    def significant(self) -> int:
        return round(self.power * self.replications)

    @property
    def se(self) -> float:
        return math.sqrt(self.power * (1.0 - self.power) / self.replications)


@dataclass(frozen=True)
class PowerGrid:
    points: tuple[PowerPoint, ...]

    def endpoints(self) -> list[str]:
        return sorted({p.endpoint for p in self.points}, key=ENDPOINTS.index)

    def hrs(self) -> list[tuple[float, float]]:
        seen: dict[tuple[float, float], None] = {}
        for p in self.points:
            seen[(p.hr_efficacy, p.hr_toxicity)] = None
        return list(seen)

    def curve(self, hr: tuple[float, float], endpoint: str = "rba") -> tuple[np.ndarray, np.ndarray]:
        pts = sorted(
            (p for p in self.points if (p.hr_efficacy, p.hr_toxicity) == tuple(hr) and p.endpoint == endpoint),
            key=lambda p: p.sample_size,
        )
        return np.array([p.sample_size for p in pts], dtype=float), np.array([p.power for p in pts])

    def ss_at_target(self, target: float = 0.8) -> dict[tuple[float, float, str], float | None]:
        out = {}
        for hr in self.hrs():
            for ep in self.endpoints():
                ss, pw = self.curve(hr, ep)
                try:
                    out[(hr[0], hr[1], ep)] = interpolate_ss(ss, pw, target)
                except TargetNotBracketed:
                    out[(hr[0], hr[1], ep)] = None
        return out

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["endpoint", "hr_eff", "hr_tox", "ss", "reps", "power", "se"])
        for p in self.points:
            w.writerow(
                [p.endpoint, f"{p.hr_efficacy:g}", f"{p.hr_toxicity:g}", p.sample_size, p.replications, f"{p.power:.3f}", f"{p.se:.4f}"]
            )
        return buf.getvalue()

    def to_json(self) -> dict:
        return {"points": [asdict(p) | {"se": p.se} for p in self.points]}


def rep_seed(seed: int, ss: int, hr_eff: float, hr_tox: float, rep: int) -> int:
    key = [int(seed), int(ss), round(hr_eff * 1_000_000), round(hr_tox * 1_000_000), int(rep)]
    return int(np.random.SeedSequence(key).generate_state(1, np.uint64)[0])


def resolve_workers(workers: int | None) -> int:
    if workers is None:
        env = os.environ.get("CWTA_WORKERS")
        workers = int(env) if env else (os.cpu_count() or 1)
    return max(1, int(workers))


def _pvalues(config: SimConfig, seeds: Sequence[int], endpoints: Sequence[str]) -> np.ndarray:
    out = np.empty((len(seeds), len(endpoints)))
    for i, s in enumerate(seeds):
        flats = flat_endpoints(simulate_states(replace(config, seed=s)), endpoints)
        for j, ep in enumerate(endpoints):
            out[i, j] = weighted_logrank(flats[ep]).p_two_sided
    return out


def _run_jobs(jobs: list[tuple[SimConfig, list[int]]], endpoints, workers: int) -> list[np.ndarray]:
    """Evaluate ``(config, seeds)`` jobs, splitting seeds into chunks for the pool."""
    if workers <= 1:
        return [_pvalues(cfg, seeds, endpoints) for cfg, seeds in jobs]
    chunk = 25
    tasks, owners = [], []
    for k, (cfg, seeds) in enumerate(jobs):
        for start in range(0, len(seeds), chunk):
            tasks.append((cfg, seeds[start : start + chunk], tuple(endpoints)))
            owners.append(k)
    with ProcessPoolExecutor(max_workers=workers) as pool:
        parts = list(pool.map(_pvalues, *zip(*tasks)))
    out: list[list[np.ndarray]] = [[] for _ in jobs]
    for k, part in zip(owners, parts):
        out[k].append(part)
    return [np.concatenate(p) for p in out]


def _endpoint_list(endpoint: str) -> tuple[str, ...]:
    if endpoint == "both":
        return ENDPOINTS
    if endpoint in ("efficacy", "efficacy_only"):
        return ("efficacy_only",)
    if endpoint == "rba":
        return ("rba",)
    raise ConfigError(f"unknown endpoint {endpoint!r}")


def estimate_power(
    config: SimConfig,
    endpoint: str = "rba",
    replications: int = 1000,
    alpha: float = 0.05,
    seed: int = 0,
    workers: int | None = 1,
) -> PowerPoint | dict[str, PowerPoint]:
    """Fraction of ``replications`` simulated trials with p < ``alpha``.

    ``endpoint="both"`` evaluates both endpoints on the same simulated trials
    and returns a dict keyed by endpoint.
    """
    grid = power_grid(config, [config.sample_size], [(config.hr_efficacy, config.hr_toxicity)], endpoint, replications, seed, alpha=alpha, workers=workers)
    if endpoint == "both":
        return {p.endpoint: p for p in grid.points}
    return grid.points[0]


def _hr_pairs(hr_list: Iterable) -> list[tuple[float, float]]:
    out = []
    for h in hr_list:
        if isinstance(h, (tuple, list)):
            out.append((float(h[0]), float(h[1])))
        else:
            out.append((float(h), float(h)))
    return out


def power_grid(
    base_config: SimConfig,
    ss_list: Sequence[int],
    hr_list: Iterable,
    endpoint: str = "rba",
    replications: int = 1000,
    seed: int = 0,
    alpha: float = 0.05,
    workers: int | None = 1,
) -> PowerGrid:
    """Power at every (HR, SS) cell.

    ``hr_list`` items are ``(hr_efficacy, hr_toxicity)`` pairs or a single
    float applied to both axes.
    """
    if replications < 1:
        raise ConfigError("replications must be >= 1")
    if not ss_list:
        raise ConfigError("empty sample-size list")
    hrs = _hr_pairs(hr_list)
    if not hrs:
        raise ConfigError("empty hazard-ratio list")
    if not 0.0 < alpha < 1.0:
        raise ConfigError("alpha must be in (0, 1)")
    eps = _endpoint_list(endpoint)
    cells, jobs = [], []
    for he, ht in hrs:
        for ss in ss_list:
            cfg = replace(base_config, sample_size=int(ss), hr_efficacy=he, hr_toxicity=ht)
            cells.append((he, ht, int(ss)))
            jobs.append((cfg, [rep_seed(seed, ss, he, ht, r) for r in range(replications)]))
    results = _run_jobs(jobs, eps, resolve_workers(workers))
    points = []
    for (he, ht, ss), pv in zip(cells, results):
        for j, ep in enumerate(eps):
            hits = int(np.count_nonzero(pv[:, j] < alpha))
            points.append(PowerPoint(he, ht, ss, replications, alpha, hits / replications, ep))
    return PowerGrid(tuple(points))


def interpolate_ss(ss: Sequence[float], power: Sequence[float], target: float = 0.8) -> float:
    """Sample size where power first reaches ``target``.

    Power is first made non-decreasing in SS by isotonic regression so Monte
    Carlo wiggles cannot create several crossings, then interpolated linearly
    between the bracketing grid points.
    """
    ss = np.asarray(ss, dtype=float)
    pw = np.asarray(power, dtype=float)
    order = np.argsort(ss)
    ss, pw = ss[order], pw[order]
    fit = isotonic_regression(pw).x if len(pw) > 1 else pw
    above = np.flatnonzero(fit >= target)
    if not len(above) or above[0] == 0:
        raise TargetNotBracketed(f"target power {target} not bracketed by grid (fitted powers {np.round(fit, 3).tolist()})")
    k = above[0]
    x0, x1, y0, y1 = ss[k - 1], ss[k], fit[k - 1], fit[k]
    return float(x0 + (target - y0) * (x1 - x0) / (y1 - y0))


def parse_range(text: str) -> list[int]:
    """``"20:320:30"`` -> [20, 50, ..., 320] (stop inclusive); also accepts ``"20,50,80"``."""
    try:
        if ":" in text:
            start, stop, step = (int(x) for x in text.split(":"))
            if step <= 0 or stop < start:
                raise ValueError
            return list(range(start, stop + 1, step))
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise ConfigError(f"malformed range {text!r}; expected start:stop:step") from None


def grid_json(grid: PowerGrid, target: float = 0.8) -> str:
    doc = grid.to_json()
    doc["ss_at_target"] = [
        {"hr_eff": he, "hr_tox": ht, "endpoint": ep, "target": target, "ss": None if v is None else round(v, 2)}
        for (he, ht, ep), v in grid.ss_at_target(target).items()
    ]
    return json.dumps(doc, indent=2, sort_keys=True)
