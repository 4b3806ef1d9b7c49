"""Exact-enumeration and finite-difference checks of the zero-power score statistics.

Every check runs on random small networks (K in {2, 5, 10}) where the
received-bit distribution under H0 can be summed over all 2**K patterns, so
the moments are exact up to rounding. The likelihood used for the finite
differences is rebuilt here from the energy-test detection probability and
the BSC, independently of :mod:`dfuse.lod`.
"""

from __future__ import annotations

import itertools
import math
import time
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .lod import bayes_score_and_fisher, fisher_at_null, lod_weights, score_at_null
from .model import Box, Exponential, Network, PowerLaw, SensorNode, gain2_matrix, gaussian_ccdf

SIZES = (2, 5, 10)
FD_STEP = 1e-6
TOL_FISHER = 1e-10
TOL_FD = 1e-4
TOL_MEAN = 1e-12


@dataclass
class Check:
    name: str
    tolerance: float
    worst: float = 0.0
    count: int = 0

    @property
    def passed(self) -> bool:
        return self.count > 0 and self.worst < self.tolerance

    def update(self, err: float):
        self.worst = max(self.worst, float(err))
        self.count += 1


@dataclass
class SelftestReport:
    checks: list = field(default_factory=list)
    scenarios: int = 0
    seconds: float = 0.0

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def lines(self) -> list[str]:
        out = []
        for c in self.checks:
            tag = "PASS" if c.passed else "FAIL"
            out.append(f"{tag} {c.name}: worst {c.worst:.3e} < {c.tolerance:g} over {c.count} cases")
        out.append(f"{self.scenarios} scenarios in {self.seconds:.2f} s")
        return out

    def to_dict(self) -> dict:
        return {
            "passed": self.passed,
            "scenarios": self.scenarios,
            "seconds": self.seconds,
            "checks": [
                {"name": c.name, "tolerance": c.tolerance, "worst": c.worst, "count": c.count, "passed": c.passed}
                for c in self.checks
            ],
        }


def all_patterns(K: int) -> np.ndarray:
    return np.array(list(itertools.product((0, 1), repeat=K)), dtype=np.uint8)


def random_network(K: int, rng: np.random.Generator, noisy: bool) -> Network:
    nodes = []
    for pos in rng.random((K, 2)):
        s2 = rng.uniform(0.5, 2.0)
        pf = rng.uniform(0.01, 0.3)
        bep = rng.uniform(0.0, 0.4) if noisy else 0.0
        nodes.append(SensorNode.from_pfa(pos, s2, pf, bep))
    return Network(tuple(nodes), Box.unit())


def random_aaf(rng: np.random.Generator):
    if rng.random() < 0.5:
        return PowerLaw(rng.uniform(0.1, 0.5), rng.uniform(2.0, 4.0))
    return Exponential(rng.uniform(0.1, 0.5))


def _loglik(patterns: np.ndarray, net: Network, g2: np.ndarray, power: float) -> np.ndarray:
    """log P(pattern | power) for every pattern; quadrature energy test plus BSC."""
    pd = 2.0 * gaussian_ccdf(np.sqrt(net.threshold / (net.noise_var + power * g2)))
    pe = net.bep
    rho = (1.0 - pe) * pd + pe * (1.0 - pd)
    return patterns @ np.log(rho) + (1 - patterns) @ np.log1p(-rho)


def run_selftest(n_scenarios: int = 50, seed: int = 20240601) -> SelftestReport:
    """Run the oracle suite; ``n_scenarios`` are split evenly over the sizes."""
    t0 = time.perf_counter()
    rng = np.random.default_rng(seed)
    fisher_pos = Check("fisher == E0[score^2] (known position)", TOL_FISHER)
    fisher_bay = Check("fisher == E0[score^2] (averaged position)", TOL_FISHER)
    fd_pos = Check("score == central difference (known position)", TOL_FD)
    fd_bay = Check("score == central difference (averaged position)", TOL_FD)
    mean_pos = Check("E0[score] == 0 (known position)", TOL_MEAN)
    mean_bay = Check("E0[score] == 0 (averaged position)", TOL_MEAN)
    patterns = {K: all_patterns(K) for K in SIZES}

    for s in range(n_scenarios):
        K = SIZES[s % len(SIZES)]
        net = random_network(K, rng, noisy=s % 5 != 0)
        aaf = random_aaf(rng)
        bits = patterns[K]
        w = lod_weights(net)
        p0 = np.exp(_loglik(bits, net, np.zeros(K), 0.0))

        # known target position
        cand = rng.random(2)
        score = np.array([score_at_null(b, net, aaf, cand, w) for b in bits])
        fisher = fisher_at_null(net, aaf, cand, w)
        fisher_pos.update(abs(p0 @ score**2 - fisher) / fisher)
        mean_pos.update(abs(p0 @ score))
        g2 = gain2_matrix(aaf, cand, net.positions)[0]
        fd = (_loglik(bits, net, g2, FD_STEP) - _loglik(bits, net, g2, -FD_STEP)) / (2 * FD_STEP)
        fd_pos.update(np.max(np.abs(fd - score) / np.maximum(np.abs(score), math.sqrt(fisher))))

        # position averaged over a random discrete prior
        n_bins = 6
        pos = rng.random((n_bins, 2))
        mass = rng.dirichlet(np.ones(n_bins))
        g2_bins = gain2_matrix(aaf, pos, net.positions)
        moments = mass @ g2_bins
        pairs = [bayes_score_and_fisher(b, net, moments, w) for b in bits]
        bscore = np.array([p[0] for p in pairs])
        bfisher = pairs[0][1]
        fisher_bay.update(abs(p0 @ bscore**2 - bfisher) / bfisher)
        mean_bay.update(abs(p0 @ bscore))
        logm = np.log(mass)[:, None]
        plus = logsumexp(np.stack([_loglik(bits, net, g, FD_STEP) for g in g2_bins]) + logm, axis=0)
        minus = logsumexp(np.stack([_loglik(bits, net, g, -FD_STEP) for g in g2_bins]) + logm, axis=0)
        bfd = (plus - minus) / (2 * FD_STEP)
        fd_bay.update(np.max(np.abs(bfd - bscore) / np.maximum(np.abs(bscore), math.sqrt(bfisher))))

    return SelftestReport(
        checks=[fisher_pos, fisher_bay, fd_pos, fd_bay, mean_pos, mean_bay],
        scenarios=n_scenarios,
        seconds=time.perf_counter() - t0,
    )
