"""Fusion statistics over (possibly noisy) one-bit sensor reports.

All rules are written once in their BSC-aware form; ideal reporting
channels are the special case ``bep = 0``, where ``rho1 = Pd`` and
``rho0 = Pf`` exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import Iterable

import numpy as np
from scipy.special import logsumexp

from . import kernels
from .channel import flip_prob
from .errors import ConfigurationError, DegenerateStatisticError
from .lod import LodWeights, lod_weights
from .model import Aaf, Box, Network, SensorNode, TargetParams, gain2_matrix, pd_from_gain2, pd_matrix

RULES = ("llr", "cr", "glrt", "bayes", "gb1", "gb2", "blod", "glod")
TABLE_RULES = ("glrt", "bayes", "gb1", "gb2", "blod", "cr", "glod")
GRID_RULES = ("glrt", "bayes", "gb1", "gb2")

# Denominators below this make a G-LOD candidate unusable.
GLOD_MIN_DENOMINATOR = 1e-300


def _as_bits(received) -> np.ndarray:
    return np.asarray(received, dtype=np.uint8)


def _log_odds_terms(rho1, rho0):
    """Per-sensor LLR contributions for a received 1 and a received 0."""
    one = np.log(rho1) - np.log(rho0)
    zero = np.log1p(-rho1) - np.log1p(-rho0)
    return one, zero


def cell_centers(region: Box, n_per_axis: int) -> np.ndarray:
    """Centers of ``n_per_axis**d`` equal cells tiling ``region``, row-major."""
    if n_per_axis < 1:
        raise ConfigurationError(f"n_per_axis must be >= 1, got {n_per_axis!r}")
    axes = [region.lo[a] + (np.arange(n_per_axis) + 0.5) * (region.hi[a] - region.lo[a]) / n_per_axis
            for a in range(region.dim)]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=1)


def power_cells(true_power: float, rho_s: float, n_sigma: int) -> np.ndarray:
    """Centers of ``n_sigma`` equal cells on ``[(1-rho_s) P, (1+rho_s) P]``."""
    if n_sigma < 1:
        raise ConfigurationError(f"n_sigma must be >= 1, got {n_sigma!r}")
    if not 0 <= rho_s < 1:
        raise ConfigurationError(f"rho_s must lie in [0, 1), got {rho_s!r}")
    lo, hi = (1.0 - rho_s) * true_power, (1.0 + rho_s) * true_power
    return lo + (np.arange(n_sigma) + 0.5) * (hi - lo) / n_sigma


@dataclass(frozen=True)
class ParameterGrid:
    """Discretized target position and power spaces with per-bin masses."""

    positions: np.ndarray
    position_mass: np.ndarray
    powers: np.ndarray
    power_mass: np.ndarray

    def __post_init__(self):
        pos = np.atleast_2d(np.asarray(self.positions, dtype=float))
        pw = np.atleast_1d(np.asarray(self.powers, dtype=float))
        r = np.atleast_1d(np.asarray(self.position_mass, dtype=float))
        rbar = np.atleast_1d(np.asarray(self.power_mass, dtype=float))
        if pos.shape[0] == 0 or pw.size == 0:
            raise ConfigurationError("grid bins must be nonempty")
        if r.shape != (pos.shape[0],) or rbar.shape != pw.shape:
            raise ConfigurationError("one mass per bin is required")
        for name, m in (("position", r), ("power", rbar)):
            if np.any(~(m >= 0)):
                raise ConfigurationError(f"{name} masses must be nonnegative")
            if abs(m.sum() - 1.0) > 1e-12:
                raise ConfigurationError(f"{name} masses must sum to 1, got {m.sum()!r}")
        if np.any(~(pw >= 0)):
            raise ConfigurationError("grid powers must be >= 0")
        for name, val in (("positions", pos), ("position_mass", r), ("powers", pw), ("power_mass", rbar)):
            val.setflags(write=False)
            object.__setattr__(self, name, val)

    @classmethod
    def uniform(cls, region: Box, n_x: int, true_power: float, rho_s: float = 0.1, n_sigma: int = 10):
        pos = cell_centers(region, n_x)
        pw = power_cells(true_power, rho_s, n_sigma)
        return cls(pos, np.full(len(pos), 1.0 / len(pos)), pw, np.full(pw.size, 1.0 / pw.size))

    @classmethod
    def singleton(cls, position, power: float):
        return cls(np.atleast_2d(position), [1.0], [power], [1.0])

    @classmethod
    def from_bins(cls, position_bins, power_bins):
        pos, r = zip(*position_bins)
        pw, rbar = zip(*power_bins)
        return cls(np.array(pos, dtype=float), r, pw, rbar)

    @property
    def n_positions(self) -> int:
        return self.positions.shape[0]

    @property
    def n_powers(self) -> int:
        return self.powers.size

    @property
    def n_cells(self) -> int:
        return self.n_positions * self.n_powers

    @property
    def position_bins(self):
        return list(zip(self.positions, self.position_mass))

    @property
    def power_bins(self):
        return list(zip(self.powers, self.power_mass))

    @cached_property
    def log_position_mass(self) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return np.log(self.position_mass)

    @cached_property
    def log_power_mass(self) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return np.log(self.power_mass)


def _position_bins(bins) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(bins, ParameterGrid):
        return bins.positions, bins.position_mass
    pos, mass = zip(*bins)
    return np.atleast_2d(np.array(pos, dtype=float)), np.asarray(mass, dtype=float)


# ------------------------------------------------------------- clairvoyant

def eval_llr(received, network: Network, aaf: Aaf, target: TargetParams) -> float:
    """Log-likelihood ratio with the true target position and power plugged in."""
    d = _as_bits(received)
    pd = pd_from_gain2(
        network.threshold, network.noise_var, network.local_pfa, target.power,
        gain2_matrix(aaf, target.position, network.positions)[0],
    )
    one, zero = _log_odds_terms(flip_prob(pd, network.bep), flip_prob(network.local_pfa, network.bep))
    return float(np.sum(np.where(d > 0, one, zero)))


def eval_cr(received) -> float:
    return float(np.sum(_as_bits(received)))


# ------------------------------------------------------------- grid rules

@dataclass(frozen=True)
class LlrTable:
    """Affine-in-bits LLR over all grid cells.

    ``llr(cell) = base[cell] + sum_k received[k] * weights[cell, k]``.
    Storage is sensor-major so ``weights`` is a transposed view.
    """

    base: np.ndarray
    weights_t: np.ndarray
    n_positions: int
    n_powers: int

    @property
    def weights(self) -> np.ndarray:
        return self.weights_t.T

    @property
    def n_cells(self) -> int:
        return self.base.size

    def cell_llr(self, received) -> np.ndarray:
        """LLR at every cell, shape (n_positions, n_powers)."""
        d = _as_bits(received).astype(float)
        return (self.base + d @ self.weights_t).reshape(self.n_positions, self.n_powers)


def build_llr_table(network: Network, aaf: Aaf, grid: ParameterGrid) -> LlrTable:
    K = network.size
    g2 = gain2_matrix(aaf, grid.positions, network.positions)  # (Np, K)
    rho0 = flip_prob(network.local_pfa, network.bep)
    wT = np.empty((K, grid.n_positions, grid.n_powers))
    base = np.empty((grid.n_positions, grid.n_powers))
    for j, power in enumerate(grid.powers):
        pd = pd_from_gain2(network.threshold, network.noise_var, network.local_pfa, power, g2)
        one, zero = _log_odds_terms(flip_prob(pd, network.bep), rho0)
        base[:, j] = zero.sum(axis=1)
        wT[:, :, j] = (one - zero).T
    return LlrTable(base.ravel(), np.ascontiguousarray(wT.reshape(K, -1)), grid.n_positions, grid.n_powers)


def eval_glrt(received, table: LlrTable) -> float:
    return float(table.cell_llr(received).max())


def glrt_argmax(received, table: LlrTable) -> tuple[int, int]:
    """(position index, power index) of the maximizing cell; ties go to the lowest index."""
    c = int(np.argmax(table.cell_llr(received).ravel()))
    return divmod(c, table.n_powers)


def _check_masses(grid: ParameterGrid):
    if not (grid.position_mass.sum() > 0 and grid.power_mass.sum() > 0):
        raise ConfigurationError("grid masses are all zero")


def eval_bayes(received, table: LlrTable, grid: ParameterGrid) -> float:
    _check_masses(grid)
    L = table.cell_llr(received)
    return float(logsumexp(L + grid.log_position_mass[:, None] + grid.log_power_mass[None, :]))


def eval_gb1(received, table: LlrTable, grid: ParameterGrid) -> float:
    """Max over power bins of the position-marginalized likelihood ratio (log)."""
    L = table.cell_llr(received)
    return float(logsumexp(L + grid.log_position_mass[:, None], axis=0).max())


def eval_gb2(received, table: LlrTable, grid: ParameterGrid) -> float:
    """Max over position bins of the power-marginalized likelihood ratio (log)."""
    L = table.cell_llr(received)
    return float(logsumexp(L + grid.log_power_mass[None, :], axis=1).max())


# ------------------------------------------------------------- LOD rules

def prior_gain_moment(sensor: SensorNode, aaf: Aaf, position_bins) -> float:
    """Prior mean of the squared gain between the target and ``sensor``."""
    pos, mass = _position_bins(position_bins)
    return float(np.dot(mass, gain2_matrix(aaf, pos, sensor.position)[:, 0]))


def prior_gain_moments(network: Network, aaf: Aaf, position_bins) -> np.ndarray:
    pos, mass = _position_bins(position_bins)
    return mass @ gain2_matrix(aaf, pos, network.positions)


def eval_blod(received, network: Network, weights: LodWeights, gain_moments) -> float:
    m = np.asarray(gain_moments, dtype=float)
    den2 = float(np.dot(weights.psi, m * m))
    if not den2 > 0:
        raise DegenerateStatisticError("B-LOD denominator vanishes (all BEPs 0.5 or all gain moments 0)")
    return float(np.dot(weights.nu(received), m)) / math.sqrt(den2)


@dataclass(frozen=True)
class GlodTable:
    """Per-candidate pieces of the normalized score, affine in the bits."""

    num_base: np.ndarray
    dnu_g2T: np.ndarray
    inv_den: np.ndarray
    valid: np.ndarray


def build_glod_table(network: Network, aaf: Aaf, weights: LodWeights, position_bins) -> GlodTable:
    pos, _ = _position_bins(position_bins)
    g2 = gain2_matrix(aaf, pos, network.positions)  # (N, K)
    den = np.sqrt(g2**2 @ weights.psi)
    valid = den >= GLOD_MIN_DENOMINATOR
    if not valid.any():
        raise DegenerateStatisticError("G-LOD denominator vanishes at every candidate position")
    inv_den = np.where(valid, 1.0 / np.where(valid, den, 1.0), 0.0)
    return GlodTable(
        num_base=g2 @ weights.nu0,
        dnu_g2T=np.ascontiguousarray(((weights.nu1 - weights.nu0)[None, :] * g2).T),
        inv_den=inv_den,
        valid=valid,
    )


def eval_glod(received, network: Network, aaf: Aaf, weights: LodWeights, position_bins) -> float:
    """Max over candidate positions of score / sqrt(Fisher), both at zero power."""
    pos, _ = _position_bins(position_bins)
    g2 = gain2_matrix(aaf, pos, network.positions)
    num = g2 @ weights.nu(received)
    den = np.sqrt(g2**2 @ weights.psi)
    valid = den >= GLOD_MIN_DENOMINATOR
    if not valid.any():
        raise DegenerateStatisticError("G-LOD denominator vanishes at every candidate position")
    return float(np.max(np.where(valid, num / np.where(valid, den, 1.0), -np.inf)))


# ------------------------------------------------------------- batches

def _unique_rows(rows: np.ndarray):
    """Distinct bit vectors and the inverse map; the memoization key is the packed row."""
    packed = np.packbits(rows, axis=1)
    keys = np.ascontiguousarray(packed).view(np.dtype((np.void, packed.shape[1]))).ravel()
    _, first, inverse = np.unique(keys, return_index=True, return_inverse=True)
    return rows[first], inverse.ravel()


class BatchEvaluator:
    """Evaluates a set of rules on many received vectors at once.

    Precomputed tables are immutable, so one evaluator can be shared by
    several threads. Grid-rule values are memoized per call by distinct
    received vector; values are deterministic so this is invisible to
    callers.
    """

    def __init__(self, network: Network, aaf: Aaf, grid: ParameterGrid, rules: Iterable[str]):
        rules = tuple(rules)
        unknown = set(rules) - set(RULES)
        if unknown:
            raise ConfigurationError(f"unknown rules: {sorted(unknown)}")
        self.network, self.aaf, self.grid, self.rules = network, aaf, grid, rules
        self.table = build_llr_table(network, aaf, grid) if set(rules) & set(GRID_RULES) else None
        self.weights = lod_weights(network) if {"blod", "glod"} & set(rules) else None
        if "blod" in rules:
            m = prior_gain_moments(network, aaf, grid)
            den2 = float(np.dot(self.weights.psi, m * m))
            if not den2 > 0:
                raise DegenerateStatisticError("B-LOD denominator vanishes (all BEPs 0.5 or all gain moments 0)")
            self._blod_slope = (self.weights.nu1 - self.weights.nu0) * m / math.sqrt(den2)
            self._blod_offset = float(np.dot(self.weights.nu0, m)) / math.sqrt(den2)
        self.glod_table = build_glod_table(network, aaf, self.weights, grid) if "glod" in rules else None
        self._rho0 = flip_prob(network.local_pfa, network.bep)

    def llr(self, rows: np.ndarray, target_positions: np.ndarray, power: float) -> np.ndarray:
        pd = pd_matrix(self.network, self.aaf, target_positions, power)
        one, zero = _log_odds_terms(flip_prob(pd, self.network.bep), self._rho0)
        return np.where(rows > 0, one, zero).sum(axis=1)

    def evaluate(self, rows, target_positions=None, power: float | None = None) -> dict[str, np.ndarray]:
        rows = np.ascontiguousarray(rows, dtype=np.uint8)
        out: dict[str, np.ndarray] = {}
        need_grid = [r for r in GRID_RULES if r in self.rules]
        need_glod = "glod" in self.rules
        if need_grid or need_glod:
            uniq, inv = _unique_rows(rows)
            if need_grid:
                t = self.table
                vals = kernels.grid_rule_stats(
                    uniq, t.base, t.weights_t, self.grid.log_position_mass, self.grid.log_power_mass
                )[inv]
                for col, name in enumerate(GRID_RULES):
                    if name in self.rules:
                        out[name] = vals[:, col]
            if need_glod:
                g = self.glod_table
                out["glod"] = kernels.glod_stats(uniq, g.num_base, g.dnu_g2T, g.inv_den, g.valid)[inv]
        if "cr" in self.rules:
            out["cr"] = rows.sum(axis=1).astype(float)
        if "blod" in self.rules:
            out["blod"] = rows @ self._blod_slope + self._blod_offset
        if "llr" in self.rules:
            if target_positions is None or power is None:
                raise ConfigurationError("the clairvoyant LLR needs the true target positions and power")
            out["llr"] = self.llr(rows, target_positions, power)
        return {r: out[r] for r in self.rules}

