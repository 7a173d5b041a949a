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

"""Classical beamformers used as comparison points.

MRT matches Bob's effective channel (direct plus reflected path for a
given STAR-IRS configuration).  ZF and MMSE act on the Eve direct channels
only.  Every beamformer uses the full power budget.
"""

import enum
import logging
import math
from typing import Union

import numpy as np
from scipy import linalg

from starsec import DegenerateChannelError, DomainError, InfeasibleError, UsageError
from starsec.channel import ChannelRealization, Links, as_links
from starsec.secrecy import Beamformer, StarCoefficients, TWO_PI, omega_r


logger = logging.getLogger('starsec.baselines')


# ZF declares Bob inside the Eve span below this relative residual.
DEGENERATE_RTOL = 1e-12


class BaselineKind(enum.Enum):

    MRT = 'mrt'
    ZF = 'zf'
    MMSE = 'mmse'

    @property
    def label(self) -> str:
        return 'AN-' + self.name


def random_star_coeffs(n_elements: int, rng: np.random.Generator) -> StarCoefficients:
    """Even energy split with independent uniform phases."""
    if n_elements < 1:
        raise DomainError('need at least one element, got %d' % n_elements)
    return StarCoefficients(
        beta_r=np.full(n_elements, 0.5),
        theta_r=rng.uniform(0.0, TWO_PI, size=n_elements),
        theta_t_an=rng.uniform(0.0, TWO_PI, size=n_elements))


def _single(ch: Union[Links, ChannelRealization]) -> Links:
    links = as_links(ch)
    if links.batched:
        raise UsageError('baseline beamformers take a single realization')
    return links


def _full_power(u: np.ndarray, p_max: float, what: str) -> Beamformer:
    norm = np.linalg.norm(u)
    if norm == 0 or not np.isfinite(norm):
        raise DegenerateChannelError('%s direction vanishes' % what)
    return Beamformer(w=math.sqrt(p_max) * u / norm, p_max=p_max)


def effective_channel(ch: Union[Links, ChannelRealization],
                      c: StarCoefficients) -> np.ndarray:
    """``g`` such that Bob's amplitude is ``g^H w``."""
    links = _single(ch)
    omega = np.diagonal(omega_r(c))
    return links.h_b + np.conj(links.d_b.T @ omega)


def mrt(ch: Union[Links, ChannelRealization], c: StarCoefficients,
        p_max: float) -> Beamformer:
    return _full_power(effective_channel(ch, c), p_max, 'MRT')


def zf(ch: Union[Links, ChannelRealization], p_max: float) -> Beamformer:
    """Project Bob's direct channel onto the null space of the Eve channels.

    :raise InfeasibleError: when N <= K or the Eve channels are linearly
        dependent
    :raise DegenerateChannelError: when Bob lies in the Eve span
    """
    links = _single(ch)
    n, k = links.n_antennas, links.n_eves
    if n <= k:
        raise InfeasibleError('ZF needs more antennas than Eves (N=%d, K=%d)'
                              % (n, k))
    H_e = links.h_k.T
    if np.linalg.matrix_rank(H_e) < k:
        raise InfeasibleError('Eve direct channels are linearly dependent')
    g = links.h_b
    coef = linalg.solve(H_e.conj().T @ H_e, H_e.conj().T @ g, assume_a='her')
    projected = g - H_e @ coef
    if np.linalg.norm(projected) < DEGENERATE_RTOL * np.linalg.norm(g):
        raise DegenerateChannelError('Bob lies in the span of the Eve channels')
    return _full_power(projected, p_max, 'ZF')


def mmse(ch: Union[Links, ChannelRealization], p_max: float) -> Beamformer:
    """``(sum_k h_k h_k^H / sigma_k^2 + I)^{-1} h_b``, scaled to full power."""
    links = _single(ch)
    sigma2_k = np.asarray(links.sigma2_k, dtype=np.float64)
    if np.any(sigma2_k <= 0):
        raise DomainError('Eve noise variances must be positive')
    h_k = links.h_k
    R = np.einsum('kn,km,k->nm', h_k, h_k.conj(), 1.0 / sigma2_k)
    R = R + np.eye(links.n_antennas)
    u = linalg.solve(R, links.h_b, assume_a='pos')
    return _full_power(u, p_max, 'MMSE')


def beamformer(kind: BaselineKind, ch: Union[Links, ChannelRealization],
               c: StarCoefficients, p_max: float) -> Beamformer:
    if kind is BaselineKind.MRT:
        return mrt(ch, c, p_max)
    if kind is BaselineKind.ZF:
        return zf(ch, p_max)
    return mmse(ch, p_max)
