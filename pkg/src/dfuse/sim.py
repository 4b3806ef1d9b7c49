"""Monte Carlo engine: decision sampling, rule evaluation, ROC estimation."""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .channel import DecisionRecord, check_beps, flip_bits
from .errors import ConfigurationError, DegenerateScenarioError, DegenerateStatisticError
from .fusion import RULES, BatchEvaluator, ParameterGrid
from .model import Aaf, Box, Network, SensorNode, TargetParams, gain2_matrix, pd_from_gain2, pd_matrix
from .rng import H0, H1, stream_key, trial_generator

log = logging.getLogger(__name__)

SAMPLING_METHODS = ("bernoulli", "measurement")
DEFAULT_CHUNK = 4096


@dataclass(frozen=True)
class Scenario:
    network: Network
    aaf: Aaf
    true_power: float
    prior_region: Box
    grid: ParameterGrid
    rules: tuple = RULES
    trials: int = 100_000
    seed: int = 0
    sampling: str = "bernoulli"

    def __post_init__(self):
        object.__setattr__(self, "rules", tuple(self.rules))
        if int(self.trials) < 1:
            raise ConfigurationError(f"trials must be >= 1, got {self.trials!r}")
        if not 0 <= int(self.seed) < 2**64:
            raise ConfigurationError(f"seed must be an unsigned 64-bit integer, got {self.seed!r}")
        if not self.network.region.contains_box(self.prior_region):
            raise ConfigurationError("prior region must lie inside the surveillance region")
        if self.sampling not in SAMPLING_METHODS:
            raise ConfigurationError(f"sampling must be one of {SAMPLING_METHODS}, got {self.sampling!r}")
        if not self.true_power >= 0:
            raise ConfigurationError("true_power must be >= 0")
        unknown = set(self.rules) - set(RULES)
        if unknown:
            raise ConfigurationError(f"unknown rules: {sorted(unknown)}")


@dataclass(frozen=True)
class StatSamples:
    h0: np.ndarray
    h1: np.ndarray


@dataclass(frozen=True)
class RocCurve:
    pfa: np.ndarray
    pd: np.ndarray

    @property
    def points(self) -> list[tuple[float, float]]:
        return list(zip(self.pfa.tolist(), self.pd.tolist()))


class PdAtPfa(NamedTuple):
    pd: float
    achieved_pfa: float
    threshold: float
    resolved: bool


def sample_target(prior_region: Box, rng: np.random.Generator) -> np.ndarray:
    u = rng.random(prior_region.dim)
    return prior_region.lo + u * (prior_region.hi - prior_region.lo)


def sample_decisions(
    hypothesis: int,
    target: TargetParams | None,
    network: Network,
    aaf: Aaf,
    rng: np.random.Generator,
    method: str = "bernoulli",
) -> DecisionRecord:
    """One trial's sent and received bits.

    ``method="measurement"`` draws the fading coefficient and noise and
    applies the energy test; ``"bernoulli"`` draws the bits directly from
    the local operating points.
    """
    if (hypothesis == H1) != (target is not None):
        raise ConfigurationError("a target is required under H1 and forbidden under H0")
    K = network.size
    beps = check_beps(network.bep)
    if method == "bernoulli":
        if hypothesis == H1:
            p = pd_matrix(network, aaf, target.position, target.power)[0]
        else:
            p = network.local_pfa
        sent = (rng.random(K) < p).astype(np.uint8)
    elif method == "measurement":
        z = rng.standard_normal((2, K))
        y = np.sqrt(network.noise_var) * z[1]
        if hypothesis == H1:
            g = np.sqrt(gain2_matrix(aaf, target.position, network.positions)[0])
            y = y + np.sqrt(target.power) * g * z[0]
        sent = (y * y > network.threshold).astype(np.uint8)
    else:
        raise ConfigurationError(f"unknown sampling method {method!r}")
    return DecisionRecord(sent, flip_bits(sent, beps, rng.random(K)))


def _draw_chunk(scenario: Scenario, hypothesis: int, start: int, stop: int):
    """Received bits and target positions for trials ``start..stop-1``.

    Every trial draws a position first (from the prior region) so that the
    clairvoyant LLR has one under both hypotheses; under H0 it does not
    influence the bits.
    """
    net, region = scenario.network, scenario.prior_region
    K, d, n = net.size, region.dim, stop - start
    key = stream_key(scenario.seed, hypothesis)
    pos_u = np.empty((n, d))
    flip_u = np.empty((n, K))
    if scenario.sampling == "bernoulli":
        dec_u = np.empty((n, K))
        for i, t in enumerate(range(start, stop)):
            g = trial_generator(key, t)
            u = g.random(d + 2 * K)
            pos_u[i], dec_u[i], flip_u[i] = u[:d], u[d : d + K], u[d + K :]
    else:
        normals = np.empty((n, 2, K))
        for i, t in enumerate(range(start, stop)):
            g = trial_generator(key, t)
            pos_u[i] = g.random(d)
            normals[i] = g.standard_normal((2, K))
            flip_u[i] = g.random(K)
    positions = region.lo + pos_u * (region.hi - region.lo)

    if scenario.sampling == "bernoulli":
        if hypothesis == H1:
            p = pd_matrix(net, scenario.aaf, positions, scenario.true_power)
        else:
            p = np.broadcast_to(net.local_pfa, (n, K))
        sent = (dec_u < p).astype(np.uint8)
    else:
        y = np.sqrt(net.noise_var) * normals[:, 1, :]
        if hypothesis == H1:
            g = np.sqrt(gain2_matrix(scenario.aaf, positions, net.positions))
            y = y + np.sqrt(scenario.true_power) * g * normals[:, 0, :]
        sent = (y * y > net.threshold).astype(np.uint8)
    return flip_bits(sent, net.bep, flip_u), positions


def draw_decisions(scenario: Scenario, hypothesis: int, start: int = 0, stop: int | None = None):
    """Received bit matrix (trials x K) and per-trial target positions."""
    stop = scenario.trials if stop is None else stop
    return _draw_chunk(scenario, hypothesis, start, stop)


def make_evaluator(scenario: Scenario) -> BatchEvaluator:
    try:
        return BatchEvaluator(scenario.network, scenario.aaf, scenario.grid, scenario.rules)
    except DegenerateStatisticError as exc:
        raise DegenerateScenarioError(str(exc)) from exc


def run_trials(
    scenario: Scenario, threads: int | None = None, chunk_size: int = DEFAULT_CHUNK
) -> dict[str, StatSamples]:
    """Evaluate every configured rule on ``scenario.trials`` trials per hypothesis.

    Output depends only on the scenario (seed included): trials are cut into
    fixed chunks and each trial has its own random stream, so the worker
    count only changes wall time.
    """
    evaluator = make_evaluator(scenario)
    bounds = [(s, min(s + chunk_size, scenario.trials)) for s in range(0, scenario.trials, chunk_size)]

    def work(bound):
        res = []
        for hyp in (H0, H1):
            rows, positions = _draw_chunk(scenario, hyp, *bound)
            res.append(evaluator.evaluate(rows, positions, scenario.true_power))
        return res

    if threads is not None and threads > 1 and len(bounds) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(work, bounds))
    else:
        parts = [work(b) for b in bounds]
    log.debug("ran %d trials in %d chunks", scenario.trials, len(bounds))
    return {
        rule: StatSamples(
            np.concatenate([p[0][rule] for p in parts]),
            np.concatenate([p[1][rule] for p in parts]),
        )
        for rule in scenario.rules
    }


def _check_samples(samples: StatSamples):
    h0, h1 = np.asarray(samples.h0, dtype=float), np.asarray(samples.h1, dtype=float)
    if h0.size == 0 or h1.size == 0:
        raise ConfigurationError("ROC estimation needs samples under both hypotheses")
    if np.isnan(h0).any() or np.isnan(h1).any():
        raise ConfigurationError("statistic samples contain NaN")
    return np.sort(h0), np.sort(h1)


def empirical_roc(samples: StatSamples) -> RocCurve:
    """Operating points of the test ``statistic > threshold`` over all sample values.

    The curve starts at the largest threshold (pfa 0) and ends at (1, 1).
    Where several thresholds give the same pfa the best pd is kept.
    """
    h0, h1 = _check_samples(samples)
    thr = np.unique(np.concatenate([h0, h1]))
    pfa = (h0.size - np.searchsorted(h0, thr, side="right")) / h0.size
    pd = (h1.size - np.searchsorted(h1, thr, side="right")) / h1.size
    pfa = np.concatenate([pfa[::-1], [1.0]])
    pd = np.concatenate([pd[::-1], [1.0]])
    # pfa is nondecreasing here; keep the last (largest pd) point of every run
    last = np.flatnonzero(np.diff(pfa, append=np.inf) > 0)
    return RocCurve(pfa[last], pd[last])


def pd_at_pfa(samples: StatSamples, target_pfa: float) -> PdAtPfa:
    """Detection rate at the smallest threshold whose pfa does not exceed ``target_pfa``.

    ``resolved`` is False when ``target_pfa < 1/len(h0)``; the threshold is then
    the largest H0 sample and the achieved pfa is 0.
    """
    if not 0 < target_pfa < 1:
        raise ConfigurationError(f"target_pfa must lie in (0, 1), got {target_pfa!r}")
    h0, h1 = _check_samples(samples)
    n0 = h0.size
    allowed = int(np.floor(target_pfa * n0 + 1e-9))
    resolved = target_pfa >= 1.0 / n0
    thr = float(h0[n0 - 1 - min(allowed, n0 - 1)])
    achieved = (n0 - np.searchsorted(h0, thr, side="right")) / n0
    pd = (h1.size - np.searchsorted(h1, thr, side="right")) / h1.size
    return PdAtPfa(float(pd), float(achieved), thr, bool(resolved))


def field_axes(region: Box, resolution: int):
    if resolution < 2:
        raise ConfigurationError(f"resolution must be >= 2, got {resolution!r}")
    if region.dim != 2:
        raise ConfigurationError("detection-probability fields are defined on 2-D regions")
    return (np.linspace(region.lo[0], region.hi[0], resolution),
            np.linspace(region.lo[1], region.hi[1], resolution))


def pd_field(sensor: SensorNode, aaf: Aaf, target: TargetParams, resolution: int, region: Box | None = None):
    """Local detection probability of ``sensor`` moved over a lattice.

    Returns ``(field, xs, ys)`` with ``field[i, j]`` evaluated at
    ``(xs[i], ys[j])``; lattice endpoints coincide with the region corners.
    """
    region = Box.unit() if region is None else region
    xs, ys = field_axes(region, resolution)
    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    lattice = np.stack([gx.ravel(), gy.ravel()], axis=1)
    g2 = gain2_matrix(aaf, target.position, lattice)[0]
    vals = pd_from_gain2(sensor.threshold, sensor.noise_var, sensor.local_pfa, target.power, g2)
    return vals.reshape(resolution, resolution), xs, ys
