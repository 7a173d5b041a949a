# Copyright (C) 2026 Starsec Developers
#
# This program is free software; you can redistribute it and/or modify
# it under the terms of the GNU General Public License as published by
# the Free Software Foundation; either version 2 of the License, or
# (at your option) any later version.
#
# This program is distributed in the hope that it will be useful,
# but WITHOUT ANY WARRANTY; without even the implied warranty of
# MERCHANTABILITY or FITNESS FOR A PARTICULAR PURPOSE.  See the
# GNU General Public License for more details.
#
# You should have received a copy of the GNU General Public License
# along with this program; if not, write to the Free Software
# Foundation, Inc., 51 Franklin Street, Fifth Floor, Boston, MA 02110-1301 USA

"""STAR-IRS coefficients, SINRs and secrecy rates.

Three transmission strategies are modelled:

* ``Strategy.AN``: the transmitted split is phase-scrambled per symbol and
  reaches the Eves as artificial noise,
* ``Strategy.CONV``: the transmitted split carries the information signal,
* ``Strategy.IRS_ONLY``: the surface only reflects (``beta_r == 1``).

Eves never receive the reflected split; reflection serves the indoor side.
Eve indices are zero-based.
"""

import dataclasses
import enum
import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from starsec import DomainError, ShapeError, UsageError
from starsec.channel import (
    ChannelRealization,
    CsiErrorConfig,
    Links,
    as_links,
    complex_gaussian,
    )


logger = logging.getLogger('starsec.secrecy')


TWO_PI = 2.0 * math.pi

# Tolerances used by check_constraints.
POWER_RTOL = 1e-9
ENERGY_ATOL = 1e-12

# Rate spreads below this many ulps of the mean are reported as zero.
_SPREAD_ULPS = 16


class Strategy(enum.Enum):

    AN = 'an'
    CONV = 'conv'
    IRS_ONLY = 'irs'

    @classmethod
    def parse(cls, value: Union[str, "Strategy"]) -> "Strategy":
        if isinstance(value, Strategy):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            raise UsageError('unknown strategy %r (choose from %s)'
                             % (value, ', '.join(s.value for s in cls)))

    @property
    def label(self) -> str:
        return {'an': 'AN', 'conv': 'CONV', 'irs': 'IRS'}[self.value]


@dataclass
class StarCoefficients:
    """Per-element STAR-IRS configuration.

    Phases are stored unwrapped; they are wrapped to [0, 2pi) only when
    constraints are reported.  Arrays may carry a leading batch axis.
    """

    beta_r: np.ndarray
    theta_r: np.ndarray
    theta_t_an: np.ndarray
    theta_t_info: Optional[np.ndarray] = None

    @property
    def beta_t(self) -> np.ndarray:
        return 1.0 - self.beta_r

    @property
    def n_elements(self) -> int:
        return self.beta_r.shape[-1]

    def validate(self) -> None:
        if not (self.beta_r.shape == self.theta_r.shape == self.theta_t_an.shape):
            raise ShapeError('coefficient arrays differ in shape')
        if not np.all(np.isfinite(self.beta_r)):
            raise DomainError('beta_r is not finite')
        if np.any(self.beta_r < 0) or np.any(self.beta_r > 1):
            raise DomainError('beta_r outside [0, 1]')
        phases = [self.theta_r, self.theta_t_an]
        if self.theta_t_info is not None:
            phases.append(self.theta_t_info)
        for theta in phases:
            if not np.all(np.isfinite(theta)):
                raise DomainError('phase is not finite')

    def transmission_phases(self, strategy: Strategy) -> np.ndarray:
        if strategy is Strategy.CONV and self.theta_t_info is not None:
            return self.theta_t_info
        return self.theta_t_an

    def for_strategy(self, strategy: Strategy) -> "StarCoefficients":
        """Apply the strategy's structural constraint (IRS_ONLY: beta_r = 1)."""
        if strategy is Strategy.IRS_ONLY:
            return dataclasses.replace(self, beta_r=np.ones_like(self.beta_r))
        return self


@dataclass
class Beamformer:
    """Transmit vector ``w`` (``(N,)`` complex) with its power budget."""

    w: np.ndarray
    p_max: float

    @property
    def power(self) -> float:
        return float(np.sum(np.abs(self.w) ** 2))


def _reflection(c: StarCoefficients) -> np.ndarray:
    return np.sqrt(c.beta_r) * np.exp(1j * c.theta_r)


def _transmission(c: StarCoefficients, theta: np.ndarray) -> np.ndarray:
    return np.sqrt(c.beta_t) * np.exp(1j * theta)


def omega_r(c: StarCoefficients) -> np.ndarray:
    """Diagonal reflection matrix, entries ``sqrt(beta_r) e^{j theta_r}``."""
    c.validate()
    return np.diag(_reflection(c))


def omega_t_an(c: StarCoefficients) -> np.ndarray:
    """Diagonal AN transmission matrix, ``sqrt(1 - beta_r) e^{j theta_t}``."""
    c.validate()
    return np.diag(_transmission(c, c.theta_t_an))


def omega_t_info(c: StarCoefficients) -> np.ndarray:
    """Diagonal transmission matrix of the conventional strategy."""
    c.validate()
    return np.diag(_transmission(c, c.transmission_phases(Strategy.CONV)))


def apply_symbol_phase(symbols: np.ndarray, rng: np.random.Generator,
                       phases: Optional[np.ndarray] = None) -> np.ndarray:
    """Turn a symbol stream into artificial noise ``z = e^{j phase} s``.

    One common phase is drawn uniformly per symbol (every element rotates by
    the same angle), unless ``phases`` forces them.
    """
    symbols = np.asarray(symbols, dtype=np.complex128)
    if phases is None:
        phases = rng.uniform(0.0, TWO_PI, size=symbols.shape)
    return np.exp(1j * np.asarray(phases)) * symbols


def _weights(w) -> np.ndarray:
    if isinstance(w, Beamformer):
        w = w.w
    w = np.asarray(w, dtype=np.complex128)
    if w.ndim >= 2 and w.shape[-1] == 1:
        w = w[..., 0]
    return w


def _bob_amplitude(links: Links, omega: np.ndarray, w: np.ndarray) -> np.ndarray:
    direct = np.sum(np.conj(links.h_b) * w, axis=-1)
    reflected = np.sum(omega * np.einsum('...ln,...n->...l', links.d_b, w), axis=-1)
    return direct + reflected


def _check_shapes(links: Links, c: StarCoefficients, w: np.ndarray) -> None:
    if w.shape[-1] != links.n_antennas:
        raise ShapeError('beamformer has %d entries, channel has N=%d'
                         % (w.shape[-1], links.n_antennas))
    if c.n_elements != links.n_elements:
        raise ShapeError('coefficients have L=%d, channel has L=%d'
                         % (c.n_elements, links.n_elements))


def sinr_bob(ch: Union[Links, ChannelRealization], c: StarCoefficients,
             w) -> Union[float, np.ndarray]:
    """``|(h_b^H + f_b^H Omega_r G) w|^2 / sigma_b^2``."""
    links = as_links(ch)
    w = _weights(w)
    _check_shapes(links, c, w)
    sigma2_b = np.asarray(links.sigma2_b)
    if np.any(sigma2_b <= 0):
        raise DomainError('noise variance must be positive')
    gamma = np.abs(_bob_amplitude(links, _reflection(c), w)) ** 2 / sigma2_b
    return float(gamma) if np.ndim(gamma) == 0 else gamma


def sinr_eves(ch: Union[Links, ChannelRealization], c: StarCoefficients, w,
              strategy: Strategy) -> np.ndarray:
    """SINR of every Eve under ``strategy``, shape ``(..., K)``."""
    links = as_links(ch)
    w = _weights(w)
    _check_shapes(links, c, w)
    if not isinstance(strategy, Strategy):
        raise UsageError('unknown strategy %r' % (strategy,))
    sigma2_k = np.asarray(links.sigma2_k)
    if np.any(sigma2_k <= 0):
        raise DomainError('noise variance must be positive')
    w_k = w[..., None, :]
    direct = np.sum(np.conj(links.h_k) * w_k, axis=-1)
    if strategy is Strategy.IRS_ONLY:
        return np.abs(direct) ** 2 / sigma2_k
    omega = _transmission(c, c.transmission_phases(strategy))[..., None, :]
    cascaded = np.einsum('...kln,...kn->...kl', links.d_k,
                         np.broadcast_to(w_k, links.h_k.shape))
    through = np.sum(omega * cascaded, axis=-1)
    if strategy is Strategy.AN:
        return np.abs(direct) ** 2 / (np.abs(through) ** 2 + sigma2_k)
    return np.abs(direct + through) ** 2 / sigma2_k


def sinr_eve(ch: Union[Links, ChannelRealization], c: StarCoefficients, w,
             k: int, strategy: Strategy) -> float:
    """SINR of Eve ``k`` (zero-based) under ``strategy``."""
    links = as_links(ch)
    if links.batched:
        raise UsageError('sinr_eve takes a single realization')
    if not 0 <= k < links.n_eves:
        raise UsageError('Eve index %d out of range for K=%d' % (k, links.n_eves))
    return float(sinr_eves(links, c, w, strategy)[k])


def secrecy_rate(gamma_b: float, gamma_list: Sequence[float]) -> float:
    """``[log2(1 + gamma_b) - max_k log2(1 + gamma_k)]^+`` in bits/s/Hz."""
    gamma_list = list(gamma_list)
    if not gamma_list:
        raise UsageError('secrecy rate needs at least one Eve')
    if gamma_b < 0 or min(gamma_list) < 0:
        raise DomainError('SINRs must be non-negative')
    gap = math.log2(1.0 + gamma_b) - max(math.log2(1.0 + g) for g in gamma_list)
    return max(gap, 0.0)


def secrecy_rates(links: Links, c: StarCoefficients, w, strategy: Strategy,
                  clamp: bool = True) -> np.ndarray:
    """Vectorized secrecy rate over a (possibly batched) channel set."""
    c = c.for_strategy(strategy)
    gamma_b = np.asarray(sinr_bob(links, c, w))
    gamma_k = sinr_eves(links, c, w, strategy)
    gap = np.log2(1.0 + gamma_b) - np.max(np.log2(1.0 + gamma_k), axis=-1)
    return np.maximum(gap, 0.0) if clamp else gap


def evaluate(ch: Union[Links, ChannelRealization], c: StarCoefficients, w,
             strategy: Strategy) -> float:
    """Secrecy rate of one realization under ``strategy``."""
    c = c.for_strategy(strategy)
    return secrecy_rate(sinr_bob(ch, c, w), sinr_eves(ch, c, w, strategy))


def stack_coefficients(coeffs: Sequence[StarCoefficients]) -> StarCoefficients:
    info = [c.theta_t_info for c in coeffs]
    return StarCoefficients(
        beta_r=np.stack([c.beta_r for c in coeffs]),
        theta_r=np.stack([c.theta_r for c in coeffs]),
        theta_t_an=np.stack([c.theta_t_an for c in coeffs]),
        theta_t_info=None if any(t is None for t in info) else np.stack(info))


def with_eve_errors(est: Links, h_err: np.ndarray, d_err: np.ndarray) -> Links:
    """True Eve channels given estimates and errors (``h = h_est + h_err``)."""
    return Links(est.h_b, est.d_b, est.h_k + h_err, est.d_k + d_err,
                 est.sigma2_b, est.sigma2_k)


def expected_secrecy_rate(est: Union[Links, ChannelRealization],
                          c: StarCoefficients, w, err: CsiErrorConfig,
                          m: int, rng: np.random.Generator,
                          strategy: Strategy = Strategy.AN) -> Tuple[float, float]:
    """Monte Carlo estimate of the expected secrecy rate under CSI errors.

    :param est: channels with the estimated Eve CSI
    :param m: number of error draws
    :return: (mean, standard error) over the ``m`` draws
    """
    if m < 1:
        raise UsageError('need at least one Monte Carlo draw, got %d' % m)
    est = as_links(est)
    if est.batched:
        raise UsageError('expected_secrecy_rate takes a single realization')
    h_err = complex_gaussian((m,) + est.h_k.shape, err.sigma2_h, rng)
    d_err = complex_gaussian((m,) + est.d_k.shape, err.sigma2_d, rng)
    draws = Links(
        h_b=np.broadcast_to(est.h_b, (m,) + est.h_b.shape),
        d_b=np.broadcast_to(est.d_b, (m,) + est.d_b.shape),
        h_k=est.h_k + h_err, d_k=est.d_k + d_err,
        sigma2_b=np.full(m, est.sigma2_b, dtype=np.float64),
        sigma2_k=np.broadcast_to(est.sigma2_k, (m,) + np.shape(est.sigma2_k)))
    rates = secrecy_rates(draws, c, w, strategy)
    mean = float(np.mean(rates))
    if m == 1:
        return mean, 0.0
    var = float(np.var(rates, ddof=1))
    # Spread left by rounding alone counts as no spread.
    if var <= (_SPREAD_ULPS * np.finfo(np.float64).eps * max(abs(mean), 1.0)) ** 2:
        var = 0.0
    return mean, math.sqrt(var / m)


@dataclass
class ConstraintResult:
    passed: bool
    margin: float


@dataclass
class ConstraintReport:
    """Outcome of :func:`check_constraints`; margins in native units."""

    results: Dict[str, ConstraintResult] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.results.values())

    @property
    def worst_margin(self) -> float:
        return min(r.margin for r in self.results.values())

    def failures(self) -> List[str]:
        return [name for name, r in self.results.items() if not r.passed]

    def __getitem__(self, name: str) -> ConstraintResult:
        return self.results[name]


def wrap_phase(theta: np.ndarray) -> np.ndarray:
    wrapped = np.mod(theta, TWO_PI)
    # mod of a tiny negative number rounds to exactly 2pi.
    return np.where(wrapped >= TWO_PI, 0.0, wrapped)


def _phase_margin(theta: np.ndarray) -> float:
    if not np.all(np.isfinite(theta)):
        return -math.inf
    wrapped = wrap_phase(theta)
    return float(min(np.min(wrapped), TWO_PI - np.max(wrapped)))


def _interval_margin(x: np.ndarray) -> float:
    if not np.all(np.isfinite(x)):
        return -math.inf
    return float(min(np.min(x), np.min(1.0 - x)))


def check_constraints(w: Beamformer, c: StarCoefficients) -> ConstraintReport:
    """Evaluate the power (C1), energy split (C2-C4) and phase (C5, C6) constraints.

    Never raises; a NaN anywhere shows up as a failed constraint.
    """
    report = ConstraintReport()
    power = w.power
    c1 = w.p_max - power if math.isfinite(power) else -math.inf
    report.results['C1'] = ConstraintResult(
        c1 >= -POWER_RTOL * w.p_max, c1)
    beta_r = np.asarray(c.beta_r, dtype=np.float64)
    beta_t = c.beta_t
    if np.all(np.isfinite(beta_r)):
        c2 = -float(np.max(np.abs(beta_r + beta_t - 1.0)))
    else:
        c2 = -math.inf
    report.results['C2'] = ConstraintResult(c2 >= -ENERGY_ATOL, c2)
    c3 = _interval_margin(beta_r)
    report.results['C3'] = ConstraintResult(c3 >= 0, c3)
    c4 = _interval_margin(beta_t)
    report.results['C4'] = ConstraintResult(c4 >= 0, c4)
    c5 = _phase_margin(c.theta_r)
    report.results['C5'] = ConstraintResult(c5 >= 0, c5)
    c6 = _phase_margin(c.theta_t_an)
    if c.theta_t_info is not None:
        c6 = min(c6, _phase_margin(c.theta_t_info))
    report.results['C6'] = ConstraintResult(c6 >= 0, c6)
    logger.debug('constraint margins: %r',
                 {k: r.margin for k, r in report.results.items()})
    return report
