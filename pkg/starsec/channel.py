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

"""Scenario geometry and Rician channel generation.

Alice (N antennas) serves Bob indoors, with the STAR-IRS (L elements) on the
wall between Bob's room and K eavesdroppers outside.  Every link is Rician
faded with a distance-dependent path loss::

    PL(d) = PL_0 - 25 log10(d / d0)   [dB]

All channel arrays are numpy ``complex128``.  Direct channels are 1-D
vectors (``h_b`` is ``(N,)``, ``h_k`` stacks the Eves as ``(K, N)``); the
Alice to STAR-IRS channel ``G`` is ``(L, N)``.
"""

import dataclasses
import hashlib
import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from starsec import ConfigError, DomainError, ShapeError
from starsec.config import (
    db_to_linear,
    dbm_to_watts,
    get_number,
    profile_overrides,
    reject_unknown,
    require,
    )


logger = logging.getLogger('starsec.channel')


PATH_LOSS_SLOPE_DB = 25.0


@dataclass(frozen=True)
class ScenarioConfig:
    """Simulation parameters.

    Powers are kept in dBm as given; their linear values (watts) are derived
    once at construction and exposed as ``p_max``, ``sigma2_b`` and
    ``sigma2_k``.
    """

    n_antennas: int = 8
    n_elements: int = 80
    n_eves: int = 2
    p_max_dbm: float = 18.0
    noise_dbm: float = -90.0
    eve_noise_dbm: Optional[Tuple[float, ...]] = None
    kappa: float = 0.3
    d_ab: float = 8.0
    d_sb: float = 8.0
    d_as: float = 8.0
    d_ae_range: Tuple[float, float] = (4.0, 8.0)
    d_se_range: Tuple[float, float] = (4.0, 8.0)
    pl0_db: float = -30.0
    d0: float = 1.0
    eve_extra_loss_db: float = 0.0
    rng_seed: int = 0

    p_max: float = field(init=False, repr=False, compare=False)
    sigma2_b: float = field(init=False, repr=False, compare=False)
    sigma2_k: Tuple[float, ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        self.validate()
        object.__setattr__(self, 'p_max', dbm_to_watts(self.p_max_dbm))
        object.__setattr__(self, 'sigma2_b', dbm_to_watts(self.noise_dbm))
        if self.eve_noise_dbm is None:
            eve_noise = (self.sigma2_b,) * self.n_eves
        else:
            eve_noise = tuple(dbm_to_watts(v) for v in self.eve_noise_dbm)
        object.__setattr__(self, 'sigma2_k', eve_noise)

    def validate(self, prefix: str = 'scenario') -> None:
        require(self.n_antennas >= 1, f'{prefix}.n_antennas', 'must be >= 1')
        require(self.n_elements >= 1, f'{prefix}.n_elements', 'must be >= 1')
        require(self.n_eves >= 1, f'{prefix}.n_eves', 'must be >= 1')
        require(self.kappa >= 0, f'{prefix}.kappa', 'must be >= 0')
        for name in ('d_ab', 'd_sb', 'd_as', 'd0'):
            require(getattr(self, name) > 0, f'{prefix}.{name}', 'must be > 0')
        for name in ('d_ae_range', 'd_se_range'):
            lo, hi = getattr(self, name)
            require(0 < lo <= hi, f'{prefix}.{name}',
                    'expected 0 < min <= max, got [%r, %r]' % (lo, hi))
        if self.eve_noise_dbm is not None:
            require(len(self.eve_noise_dbm) == self.n_eves,
                    f'{prefix}.eve_noise_dbm',
                    'expected %d entries, got %d'
                    % (self.n_eves, len(self.eve_noise_dbm)))

    @classmethod
    def from_dict(cls, d: Dict[str, Any], prefix: str = 'scenario') -> "ScenarioConfig":
        known = [f.name for f in dataclasses.fields(cls) if f.init]
        reject_unknown(d, known, prefix)
        kwargs: Dict[str, Any] = {}
        for f in dataclasses.fields(cls):
            if not f.init or f.name not in d:
                continue
            value = d[f.name]
            if f.name in ('d_ae_range', 'd_se_range'):
                if not isinstance(value, (list, tuple)) or len(value) != 2:
                    raise ConfigError(f'{prefix}.{f.name}',
                                      'expected [min, max]')
                kwargs[f.name] = (float(value[0]), float(value[1]))
            elif f.name == 'eve_noise_dbm':
                if value is not None:
                    kwargs[f.name] = tuple(float(v) for v in value)
            else:
                kwargs[f.name] = get_number(
                    d, f.name, prefix,
                    integer=f.name in ('n_antennas', 'n_elements', 'n_eves', 'rng_seed'))
        return cls(**kwargs)

    @classmethod
    def for_profile(cls, profile: str, overrides: Optional[Dict[str, Any]] = None) -> "ScenarioConfig":
        d = profile_overrides(profile, 'scenario')
        d.update(overrides or {})
        return cls.from_dict(d)

    def to_dict(self) -> Dict[str, Any]:
        d = {}
        for f in dataclasses.fields(self):
            if not f.init:
                continue
            value = getattr(self, f.name)
            if isinstance(value, tuple):
                value = list(value)
            d[f.name] = value
        return d

    def replace(self, **changes) -> "ScenarioConfig":
        return dataclasses.replace(self, **changes)

    def reference_gains(self) -> Tuple[float, float]:
        """Return (direct, cascaded) power gains of Bob's links.

        Used to scale GNN input features to order one.
        """
        direct = path_loss_gain(self.d_ab, self)
        cascaded = path_loss_gain(self.d_sb, self) * path_loss_gain(self.d_as, self)
        return direct, cascaded


@dataclass(frozen=True)
class CsiErrorConfig:
    """Variances of the Eve channel estimation errors."""

    sigma2_h: float = 0.0
    sigma2_d: float = 0.0

    def __post_init__(self):
        require(self.sigma2_h >= 0, 'csi_error.sigma2_h', 'must be >= 0')
        require(self.sigma2_d >= 0, 'csi_error.sigma2_d', 'must be >= 0')

    @classmethod
    def equal(cls, mse: float) -> "CsiErrorConfig":
        return cls(sigma2_h=mse, sigma2_d=mse)

    @classmethod
    def relative(cls, nmse: float, scenario: "ScenarioConfig") -> "CsiErrorConfig":
        """Error variances as a fraction of the scenario's reference gains."""
        direct, cascaded = scenario.reference_gains()
        return cls(sigma2_h=nmse * direct, sigma2_d=nmse * cascaded)

    @classmethod
    def from_dict(cls, d: Dict[str, Any], prefix: str = 'csi_error') -> "CsiErrorConfig":
        reject_unknown(d, ('sigma2_h', 'sigma2_d'), prefix)
        return cls(sigma2_h=get_number(d, 'sigma2_h', prefix, default=0.0),
                   sigma2_d=get_number(d, 'sigma2_d', prefix, default=0.0))

    def to_dict(self) -> Dict[str, Any]:
        return {'sigma2_h': self.sigma2_h, 'sigma2_d': self.sigma2_d}

    @property
    def perfect(self) -> bool:
        return self.sigma2_h == 0 and self.sigma2_d == 0


@dataclass(frozen=True)
class Scenario:
    """Link distances (meters) of one realization."""

    d_ab: float
    d_sb: float
    d_as: float
    d_ae: Tuple[float, ...]
    d_se: Tuple[float, ...]


@dataclass
class Links:
    """Effective channels seen by the secrecy-rate formulas.

    The cascaded channels are kept as ``L x N`` matrices
    ``D = diag(f^H) G``, so that ``f^H Omega G w == omega^T D w`` where
    ``omega`` is the diagonal of ``Omega``.  Arrays may carry one leading
    batch axis.

    :param h_b: Bob's direct channel, ``(N,)``
    :param d_b: Bob's cascaded channel, ``(L, N)``
    :param h_k: Eve direct channels, ``(K, N)``
    :param d_k: Eve cascaded channels, ``(K, L, N)``
    :param sigma2_b: Bob's noise variance (watts)
    :param sigma2_k: Eve noise variances, ``(K,)``
    """

    h_b: np.ndarray
    d_b: np.ndarray
    h_k: np.ndarray
    d_k: np.ndarray
    sigma2_b: Union[float, np.ndarray]
    sigma2_k: np.ndarray

    @property
    def batched(self) -> bool:
        return self.h_b.ndim == 2

    @property
    def n_antennas(self) -> int:
        return self.h_b.shape[-1]

    @property
    def n_elements(self) -> int:
        return self.d_b.shape[-2]

    @property
    def n_eves(self) -> int:
        return self.h_k.shape[-2]

    def __len__(self):
        if not self.batched:
            raise TypeError('unbatched Links has no length')
        return self.h_b.shape[0]

    def __getitem__(self, i) -> "Links":
        if not self.batched:
            raise TypeError('unbatched Links cannot be indexed')
        return Links(self.h_b[i], self.d_b[i], self.h_k[i], self.d_k[i],
                     float(np.asarray(self.sigma2_b)[i]), self.sigma2_k[i])

    def permute_eves(self, order: Sequence[int]) -> "Links":
        order = list(order)
        return Links(self.h_b, self.d_b, self.h_k[..., order, :],
                     self.d_k[..., order, :, :], self.sigma2_b,
                     self.sigma2_k[..., order])


@dataclass
class ChannelRealization:
    """All channels of one coherence interval."""

    h_b: np.ndarray
    h_k: np.ndarray
    f_b: np.ndarray
    f_k: np.ndarray
    G: np.ndarray
    sigma2_b: float
    sigma2_k: np.ndarray

    def __post_init__(self):
        n = self.h_b.shape[0]
        l_count = self.f_b.shape[0]
        if self.G.shape != (l_count, n):
            raise ShapeError('G is %r, expected (%d, %d)'
                             % (self.G.shape, l_count, n))
        if self.h_k.shape[1:] != (n,) or self.f_k.shape[1:] != (l_count,):
            raise ShapeError('Eve channel shapes %r/%r do not match N=%d, L=%d'
                             % (self.h_k.shape, self.f_k.shape, n, l_count))
        if not (len(self.h_k) == len(self.f_k) == len(self.sigma2_k)):
            raise ShapeError('Eve lists have different lengths')

    @property
    def n_eves(self) -> int:
        return self.h_k.shape[0]

    def links(self) -> Links:
        return Links(
            h_b=self.h_b,
            d_b=cascaded_matrix(self.f_b, self.G),
            h_k=self.h_k,
            d_k=np.stack([cascaded_matrix(f, self.G) for f in self.f_k]),
            sigma2_b=self.sigma2_b,
            sigma2_k=np.asarray(self.sigma2_k, dtype=np.float64))


def as_links(ch: Union[Links, ChannelRealization]) -> Links:
    if isinstance(ch, Links):
        return ch
    return ch.links()


def stack_links(links_list: Sequence[Links]) -> Links:
    """Stack unbatched Links along a new leading batch axis."""
    if not links_list:
        raise ShapeError('cannot stack an empty channel set')
    links_list = [as_links(li) for li in links_list]
    try:
        return Links(
            h_b=np.stack([li.h_b for li in links_list]),
            d_b=np.stack([li.d_b for li in links_list]),
            h_k=np.stack([li.h_k for li in links_list]),
            d_k=np.stack([li.d_k for li in links_list]),
            sigma2_b=np.array([li.sigma2_b for li in links_list], dtype=np.float64),
            sigma2_k=np.stack([np.asarray(li.sigma2_k, dtype=np.float64)
                               for li in links_list]))
    except ValueError as e:
        raise ShapeError('channel set mixes dimensions: %s' % e)


def path_loss_gain(d: float, cfg: ScenarioConfig) -> float:
    """Linear power gain at distance ``d`` meters."""
    if d <= 0:
        raise DomainError('distance must be positive, got %r' % (d,))
    pl_db = cfg.pl0_db - PATH_LOSS_SLOPE_DB * np.log10(d / cfg.d0)
    return float(10.0 ** (pl_db / 10.0))


def sample_scenario(cfg: ScenarioConfig, rng: np.random.Generator) -> Scenario:
    """Place the Eves; the Alice, Bob and STAR-IRS distances are fixed."""
    d_ae = rng.uniform(cfg.d_ae_range[0], cfg.d_ae_range[1], size=cfg.n_eves)
    d_se = rng.uniform(cfg.d_se_range[0], cfg.d_se_range[1], size=cfg.n_eves)
    # uniform() on a zero-width interval can still round; pin it.
    if cfg.d_ae_range[0] == cfg.d_ae_range[1]:
        d_ae[:] = cfg.d_ae_range[0]
    if cfg.d_se_range[0] == cfg.d_se_range[1]:
        d_se[:] = cfg.d_se_range[0]
    return Scenario(d_ab=cfg.d_ab, d_sb=cfg.d_sb, d_as=cfg.d_as,
                    d_ae=tuple(float(d) for d in d_ae),
                    d_se=tuple(float(d) for d in d_se))


def steering_vector(n: int, angle: float) -> np.ndarray:
    """Half-wavelength uniform linear array response."""
    return np.exp(1j * np.pi * np.arange(n) * np.sin(angle))


def complex_gaussian(shape, variance: float, rng: np.random.Generator) -> np.ndarray:
    """Circularly-symmetric complex Gaussian samples, CN(0, variance)."""
    scale = np.sqrt(variance / 2.0)
    return scale * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


def sample_rician(rows: int, cols: int, kappa: float, gain: float,
                  rng: np.random.Generator,
                  geometry: Optional[Tuple[float, float]] = None) -> np.ndarray:
    """Draw one Rician-faded channel matrix.

    :param geometry: (arrival angle, departure angle) in radians for the
        line-of-sight component; drawn uniformly in [0, 2pi) when omitted
    :return: ``(rows, cols)`` complex array
    """
    if kappa < 0:
        raise DomainError('Rician factor must be >= 0, got %r' % (kappa,))
    if gain < 0:
        raise DomainError('gain must be >= 0, got %r' % (gain,))
    if geometry is None:
        aoa, aod = rng.uniform(0.0, 2.0 * np.pi, size=2)
    else:
        aoa, aod = geometry
    common_phase = rng.uniform(0.0, 2.0 * np.pi)
    los = np.exp(1j * common_phase) * np.outer(
        steering_vector(rows, aoa), np.conj(steering_vector(cols, aod)))
    nlos = complex_gaussian((rows, cols), 1.0, rng)
    return np.sqrt(gain) * (np.sqrt(kappa / (1.0 + kappa)) * los
                            + np.sqrt(1.0 / (1.0 + kappa)) * nlos)


def sample_channels(cfg: ScenarioConfig, scenario: Scenario,
                    rng: np.random.Generator) -> ChannelRealization:
    n, l_count = cfg.n_antennas, cfg.n_elements
    eve_loss = db_to_linear(-cfg.eve_extra_loss_db)

    def draw(rows, cols, d, extra=1.0):
        return sample_rician(rows, cols, cfg.kappa,
                             path_loss_gain(d, cfg) * extra, rng)

    h_b = draw(n, 1, scenario.d_ab)[:, 0]
    f_b = draw(l_count, 1, scenario.d_sb)[:, 0]
    G = draw(l_count, n, scenario.d_as)
    h_k = np.stack([draw(n, 1, d, eve_loss)[:, 0] for d in scenario.d_ae])
    f_k = np.stack([draw(l_count, 1, d)[:, 0] for d in scenario.d_se])
    return ChannelRealization(
        h_b=h_b, h_k=h_k, f_b=f_b, f_k=f_k, G=G,
        sigma2_b=cfg.sigma2_b,
        sigma2_k=np.asarray(cfg.sigma2_k, dtype=np.float64))


def sample_links(cfg: ScenarioConfig, rng: np.random.Generator,
                 count: int) -> List[Links]:
    """Draw ``count`` independent realizations, each with its own geometry."""
    return [sample_channels(cfg, sample_scenario(cfg, rng), rng).links()
            for _ in range(count)]


def cascaded_matrix(f: np.ndarray, G: np.ndarray) -> np.ndarray:
    """``diag(f^H) G`` as an ``(L, N)`` matrix."""
    f = np.asarray(f)
    if f.ndim == 2 and f.shape[1] == 1:
        f = f[:, 0]
    if f.ndim != 1 or G.ndim != 2 or G.shape[0] != f.shape[0]:
        raise ShapeError('cascaded: f %r does not conform with G %r'
                         % (f.shape, G.shape))
    return np.conj(f)[:, None] * G


def cascaded(f: np.ndarray, G: np.ndarray) -> np.ndarray:
    """Row-major vectorization of ``diag(f^H) G``, length ``L * N``."""
    return cascaded_matrix(f, G).reshape(-1)


@dataclass
class CsiEstimate:
    """Imperfect Eve CSI: ``h_k == h_k_est + h_k_err`` (same for ``d_k``)."""

    h_k_est: np.ndarray
    d_k_est: np.ndarray
    h_k_err: np.ndarray
    d_k_err: np.ndarray
    links: Links


def perturb_csi(ch: Union[Links, ChannelRealization], err: CsiErrorConfig,
                rng: np.random.Generator) -> CsiEstimate:
    """Derive the transmitter's estimate of the Eve channels.

    Bob's channels are passed through untouched.
    """
    true = as_links(ch)
    h_err = complex_gaussian(true.h_k.shape, err.sigma2_h, rng)
    d_err = complex_gaussian(true.d_k.shape, err.sigma2_d, rng)
    h_est = true.h_k - h_err
    d_est = true.d_k - d_err
    est_links = Links(true.h_b, true.d_b, h_est, d_est,
                      true.sigma2_b, true.sigma2_k)
    return CsiEstimate(h_k_est=h_est, d_k_est=d_est,
                       h_k_err=h_err, d_k_err=d_err, links=est_links)


def channel_set_digest(links_list: Sequence[Links]) -> str:
    """SHA-256 over the raw bytes of a channel set, in order."""
    digest = hashlib.sha256()
    for li in links_list:
        for arr in (li.h_b, li.d_b, li.h_k, li.d_k,
                    np.asarray(li.sigma2_b, dtype=np.float64),
                    np.asarray(li.sigma2_k, dtype=np.float64)):
            digest.update(np.ascontiguousarray(arr).tobytes())
    return digest.hexdigest()
