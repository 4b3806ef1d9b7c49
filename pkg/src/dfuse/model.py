"""Sensing model: attenuation functions, local energy-test operating points."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Union

import numpy as np
from scipy import special

from .errors import ConfigurationError

SQRT2 = math.sqrt(2.0)


def gaussian_ccdf(x):
    """Standard normal tail probability Q(x) = Pr{N(0,1) > x}.

    Accepts scalars or arrays. Uses ``erfc`` so the upper tail keeps full
    relative precision instead of cancelling against 1.
    """
    out = 0.5 * special.erfc(np.asarray(x, dtype=float) / SQRT2)
    return float(out) if np.ndim(out) == 0 else out


def gaussian_ccdf_inv(p):
    """Inverse of :func:`gaussian_ccdf` on (0, 1)."""
    arr = np.asarray(p, dtype=float)
    if not np.all((arr > 0.0) & (arr < 1.0)):
        raise ValueError(f"gaussian_ccdf_inv: probability must lie in (0, 1), got {p!r}")
    out = -special.ndtri(arr)
    return float(out) if np.ndim(out) == 0 else out


def as_position(coords) -> np.ndarray:
    pos = np.array(coords, dtype=float).reshape(-1)
    if pos.size < 1 or not np.all(np.isfinite(pos)):
        raise ConfigurationError(f"position must be a finite vector of length >= 1, got {coords!r}")
    pos.setflags(write=False)
    return pos


@dataclass(frozen=True)
class Box:
    """Axis-aligned box ``[lo_0, hi_0] x ... x [lo_{d-1}, hi_{d-1}]``."""

    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        lo, hi = as_position(self.lo), as_position(self.hi)
        if lo.shape != hi.shape:
            raise ConfigurationError("box corners must have the same dimension")
        if np.any(hi < lo):
            raise ConfigurationError(f"box is empty: lo={lo.tolist()} hi={hi.tolist()}")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @classmethod
    def unit(cls, dim: int = 2) -> "Box":
        return cls(np.zeros(dim), np.ones(dim))

    @property
    def dim(self) -> int:
        return self.lo.size

    @property
    def center(self) -> np.ndarray:
        return 0.5 * (self.lo + self.hi)

    def contains(self, points, atol: float = 1e-12) -> bool:
        pts = np.atleast_2d(points)
        return bool(np.all((pts >= self.lo - atol) & (pts <= self.hi + atol)))

    def contains_box(self, other: "Box", atol: float = 1e-12) -> bool:
        return bool(np.all(other.lo >= self.lo - atol) and np.all(other.hi <= self.hi + atol))


@dataclass(frozen=True)
class PowerLaw:
    """g(d) = 1 / sqrt(1 + (d/eta)^alpha)."""

    eta: float
    alpha: float

    def __post_init__(self):
        if not (self.eta > 0 and self.alpha > 0):
            raise ConfigurationError(f"power-law AAF needs eta > 0 and alpha > 0, got {self}")

    def gain_from_distance(self, dist):
        return 1.0 / np.sqrt(1.0 + (np.asarray(dist) / self.eta) ** self.alpha)

    def gain2_from_distance(self, dist):
        return 1.0 / (1.0 + (np.asarray(dist) / self.eta) ** self.alpha)


@dataclass(frozen=True)
class Exponential:
    """g(d) = sqrt(exp(-d^2 / eta^2))."""

    eta: float

    def __post_init__(self):
        if not self.eta > 0:
            raise ConfigurationError(f"exponential AAF needs eta > 0, got {self}")

    def gain_from_distance(self, dist):
        return np.exp(-0.5 * (np.asarray(dist) / self.eta) ** 2)

    def gain2_from_distance(self, dist):
        return np.exp(-((np.asarray(dist) / self.eta) ** 2))


Aaf = Union[PowerLaw, Exponential]


def _distances(target_positions, sensor_positions) -> np.ndarray:
    t = np.atleast_2d(np.asarray(target_positions, dtype=float))
    s = np.atleast_2d(np.asarray(sensor_positions, dtype=float))
    if t.shape[1] != s.shape[1]:
        raise ConfigurationError(
            f"dimension mismatch: target has d={t.shape[1]}, sensors have d={s.shape[1]}"
        )
    diff = t[:, None, :] - s[None, :, :]
    return np.sqrt(np.einsum("tkd,tkd->tk", diff, diff))


def aaf_gain(aaf: Aaf, target_pos, sensor_pos) -> float:
    """Amplitude gain between a target and a single sensor."""
    dist = _distances(as_position(target_pos), as_position(sensor_pos))[0, 0]
    return float(aaf.gain_from_distance(dist))


def gain2_matrix(aaf: Aaf, target_positions, sensor_positions) -> np.ndarray:
    """Squared gains, shape (n_targets, n_sensors)."""
    return aaf.gain2_from_distance(_distances(target_positions, sensor_positions))


def threshold_from_local_pfa(noise_var: float, local_pfa: float) -> float:
    """Energy threshold giving false-alarm rate ``local_pfa``: Pf = 2 Q(sqrt(gamma / noise_var))."""
    if not noise_var > 0:
        raise ConfigurationError(f"noise_var must be > 0, got {noise_var!r}")
    if not 0.0 < local_pfa < 1.0:
        raise ConfigurationError(f"local_pfa must lie in (0, 1), got {local_pfa!r}")
    return noise_var * gaussian_ccdf_inv(0.5 * local_pfa) ** 2


def snr_db_to_power(snr_db: float, noise_var: float) -> float:
    return noise_var * 10.0 ** (snr_db / 10.0)


@dataclass(frozen=True)
class SensorNode:
    position: np.ndarray
    noise_var: float
    local_pfa: float
    threshold: float
    bep: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "position", as_position(self.position))
        if not self.noise_var > 0:
            raise ConfigurationError(f"noise_var must be > 0, got {self.noise_var!r}")
        if not 0.0 < self.local_pfa < 1.0:
            raise ConfigurationError(f"local_pfa must lie in (0, 1), got {self.local_pfa!r}")
        if not 0.0 <= self.bep <= 0.5:
            raise ConfigurationError(f"bep must lie in [0, 0.5], got {self.bep!r}")
        if not self.threshold > 0:
            raise ConfigurationError(f"threshold must be > 0, got {self.threshold!r}")
        implied = 2.0 * gaussian_ccdf(math.sqrt(self.threshold / self.noise_var))
        if abs(implied - self.local_pfa) > 1e-10:
            raise ConfigurationError(
                f"threshold {self.threshold!r} implies local_pfa {implied!r}, not {self.local_pfa!r}"
            )

    @classmethod
    def from_pfa(cls, position, noise_var: float, local_pfa: float, bep: float = 0.0) -> "SensorNode":
        gamma = threshold_from_local_pfa(noise_var, local_pfa)
        return cls(position, noise_var, local_pfa, gamma, bep)


@dataclass(frozen=True)
class TargetParams:
    position: np.ndarray
    power: float

    def __post_init__(self):
        object.__setattr__(self, "position", as_position(self.position))
        if not (self.power >= 0 and math.isfinite(self.power)):
            raise ConfigurationError(f"target power must be finite and >= 0, got {self.power!r}")


@dataclass(frozen=True)
class Network:
    """Sensor deployment. Per-sensor quantities are also exposed as arrays."""

    nodes: tuple
    region: Box = field(default_factory=Box.unit)

    def __post_init__(self):
        nodes = tuple(self.nodes)
        if len(nodes) < 1:
            raise ConfigurationError("network needs at least one sensor")
        object.__setattr__(self, "nodes", nodes)
        dims = {n.position.size for n in nodes}
        if dims != {self.region.dim}:
            raise ConfigurationError("sensor positions and region differ in dimension")
        if not self.region.contains(self.positions):
            raise ConfigurationError("all sensor positions must lie inside the region")

    def __len__(self) -> int:
        return len(self.nodes)

    @property
    def size(self) -> int:
        return len(self.nodes)

    @cached_property
    def positions(self) -> np.ndarray:
        return np.array([n.position for n in self.nodes])

    @cached_property
    def noise_var(self) -> np.ndarray:
        return np.array([n.noise_var for n in self.nodes])

    @cached_property
    def local_pfa(self) -> np.ndarray:
        return np.array([n.local_pfa for n in self.nodes])

    @cached_property
    def threshold(self) -> np.ndarray:
        return np.array([n.threshold for n in self.nodes])

    @cached_property
    def bep(self) -> np.ndarray:
        return np.array([n.bep for n in self.nodes])


def pd_from_gain2(threshold, noise_var, local_pfa, power: float, gain2):
    """Vectorized detection probability for given squared gains.

    Exactly ``local_pfa`` wherever ``power * gain2 == 0``.
    """
    signal = power * np.asarray(gain2, dtype=float)
    pd = 2.0 * gaussian_ccdf(np.sqrt(threshold / (noise_var + signal)))
    return np.where(signal > 0, pd, np.broadcast_to(local_pfa, np.shape(pd)))


def pd_matrix(network: Network, aaf: Aaf, target_positions, power: float) -> np.ndarray:
    """Local detection probabilities, shape (n_targets, K)."""
    g2 = gain2_matrix(aaf, target_positions, network.positions)
    return pd_from_gain2(network.threshold, network.noise_var, network.local_pfa, power, g2)


def local_pd(node: SensorNode, aaf: Aaf, target: TargetParams) -> float:
    g2 = aaf.gain2_from_distance(np.linalg.norm(target.position - node.position))
    return float(pd_from_gain2(node.threshold, node.noise_var, node.local_pfa, target.power, g2))


def local_llr(y: float, node: SensorNode, aaf: Aaf, target: TargetParams) -> float:
    """Local log-likelihood ratio of a single zero-mean Gaussian measurement."""
    g2 = float(aaf.gain2_from_distance(np.linalg.norm(target.position - node.position)))
    s = target.power * g2
    w = node.noise_var
    return 0.5 * math.log(w / (w + s)) + s / (w * (w + s)) * y * y


GRID_LAYOUTS = ("cell_centers", "corners")


def build_grid_network(
    K: int,
    region: Box | None = None,
    noise_var: float = 1.0,
    local_pfa: float = 0.05,
    bep: float = 0.0,
    layout: str = "cell_centers",
) -> Network:
    """Regular sqrt(K) x sqrt(K) deployment.

    ``layout="cell_centers"`` splits each axis into sqrt(K) equal cells and
    puts a node in the middle of each; ``"corners"`` spaces nodes evenly from
    edge to edge so the outer ones sit on the boundary. The lattice spans the
    first two axes; any further coordinates sit at the region center. K = 1
    puts the single node at the center under either layout.
    """
    region = Box.unit() if region is None else region
    side = math.isqrt(int(K)) if K >= 1 else 0
    if K < 1 or side * side != K:
        raise ConfigurationError(f"sensor count must be a perfect square, got {K!r}")
    if layout not in GRID_LAYOUTS:
        raise ConfigurationError(f"layout must be one of {GRID_LAYOUTS}, got {layout!r}")
    if side == 1:
        coords = [region.center]
    else:
        if region.dim < 2:
            raise ConfigurationError("a square sensor lattice needs a region with d >= 2")
        if layout == "corners":
            axes = [np.linspace(region.lo[a], region.hi[a], side) for a in range(2)]
        else:
            frac = (np.arange(side) + 0.5) / side
            axes = [region.lo[a] + frac * (region.hi[a] - region.lo[a]) for a in range(2)]
        mesh = np.meshgrid(*axes, indexing="ij")
        flat = np.stack([m.ravel() for m in mesh], axis=1)
        coords = np.tile(region.center, (flat.shape[0], 1))
        coords[:, : flat.shape[1]] = flat
    gamma = threshold_from_local_pfa(noise_var, local_pfa)
    nodes = tuple(SensorNode(c, noise_var, local_pfa, gamma, bep) for c in coords)
    return Network(nodes, region)
