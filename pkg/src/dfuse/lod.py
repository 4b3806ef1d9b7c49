"""Score and Fisher information of the received-bit pmf at zero target power.

Everything here is evaluated at the null (power 0) and already includes
the BSC: with ``rho0 = (1 - Pe) Pf + Pe (1 - Pf)``,

    nu_k(d)  = (d - rho0) / (rho0 (1 - rho0)) * (1 - 2 Pe) * c_k
    psi_k    = (1 - 2 Pe)^2 * c_k^2 / (rho0 (1 - rho0))
    c_k      = phi(sqrt(gamma/s2)) * sqrt(gamma) / s2^(3/2)

where ``phi`` is the standard normal density. The score for a known
target position is ``sum_k nu_k(d_k) g_k^2`` and its Fisher information
``sum_k psi_k g_k^4``. Ideal channels are simply ``Pe = 0``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .channel import flip_prob
from .errors import ConfigurationError, DegenerateStatisticError
from .model import Aaf, Network, SensorNode, gain2_matrix

INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


def standard_normal_pdf(x):
    x = np.asarray(x, dtype=float)
    out = INV_SQRT_2PI * np.exp(-0.5 * x * x)
    return float(out) if out.ndim == 0 else out


def _null_slope(threshold, noise_var):
    """d Pd / d(power * g^2) at power 0, per unit squared gain."""
    return standard_normal_pdf(np.sqrt(threshold / noise_var)) * np.sqrt(threshold) / noise_var**1.5


def pd_derivative(threshold: float, noise_var: float, gain2: float, power: float) -> float:
    """d Pd / d power at an arbitrary power (used by finite-difference checks)."""
    total = noise_var + power * gain2
    return float(standard_normal_pdf(math.sqrt(threshold / total)) * math.sqrt(threshold) * gain2 / total**1.5)


def pd_derivative_at_null(node: SensorNode, gain: float) -> float:
    """d Pd / d power at power 0 for amplitude gain ``gain``."""
    return float(_null_slope(node.threshold, node.noise_var) * gain * gain)


@dataclass(frozen=True)
class LodWeights:
    nu0: np.ndarray
    nu1: np.ndarray
    psi: np.ndarray

    def nu(self, received) -> np.ndarray:
        d = np.asarray(received)
        return np.where(d > 0, self.nu1, self.nu0)


def lod_weights(network: Network) -> LodWeights:
    rho0 = flip_prob(network.local_pfa, network.bep)
    rho0 = np.atleast_1d(rho0)
    if np.any(~((rho0 > 0.0) & (rho0 < 1.0))):
        raise ConfigurationError("LOD weights need every rho0 strictly inside (0, 1)")
    var0 = rho0 * (1.0 - rho0)
    contrast = 1.0 - 2.0 * network.bep
    slope = _null_slope(network.threshold, network.noise_var)
    scale = contrast * slope / var0
    nu0 = -rho0 * scale
    nu1 = (1.0 - rho0) * scale
    psi = contrast**2 * slope**2 / var0
    return LodWeights(nu0, nu1, psi)


def _weights(network: Network, weights: LodWeights | None) -> LodWeights:
    return lod_weights(network) if weights is None else weights


def score_at_null(received, network: Network, aaf: Aaf, candidate, weights: LodWeights | None = None) -> float:
    """d/dpower of log P(received | target at ``candidate``) at power 0."""
    w = _weights(network, weights)
    g2 = gain2_matrix(aaf, candidate, network.positions)[0]
    return float(np.dot(w.nu(received), g2))


def fisher_at_null(network: Network, aaf: Aaf, candidate, weights: LodWeights | None = None) -> float:
    w = _weights(network, weights)
    g2 = gain2_matrix(aaf, candidate, network.positions)[0]
    return float(np.dot(w.psi, g2 * g2))


def bayes_score_and_fisher(
    received, network: Network, gain_moments, weights: LodWeights | None = None
) -> tuple[float, float]:
    """Score and Fisher information with the position averaged out.

    ``gain_moments[k]`` is the prior mean of g^2 between target and sensor k.
    """
    w = _weights(network, weights)
    m = np.asarray(gain_moments, dtype=float)
    score = float(np.dot(w.nu(received), m))
    fisher = float(np.dot(w.psi, m * m))
    if not fisher > 0:
        raise DegenerateStatisticError("Fisher information vanishes: all BEPs are 0.5 or all gain moments are 0")
    return score, fisher
