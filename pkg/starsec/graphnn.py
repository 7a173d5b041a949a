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

"""Graph neural network producing the beamformer and STAR-IRS coefficients.

The graph has K + 2 nodes: row 0 is the STAR-IRS node (mean of all user
features), row 1 is Bob and rows 2.. are the Eves.  Two GCN layers
``ReLU(A_norm X F)`` are followed by two fully connected heads: ``FC_v``
reads the STAR-IRS row and yields the energy split and phase cosines,
``FC_w`` reads Bob's row and yields the beamformer, scaled so that the
power budget is met with equality.

Training is unsupervised: the loss is the negative mean secrecy rate of a
freshly sampled batch, minimized with plain SGD.
"""

import dataclasses
import enum
import json
import logging
import math
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from starsec import ConfigError, DomainError, NumericError, ShapeError, UsageError
from starsec.channel import (
    CsiErrorConfig,
    Links,
    ScenarioConfig,
    as_links,
    complex_gaussian,
    perturb_csi,
    sample_links,
    stack_links,
    )
from starsec.config import get_number, reject_unknown, require
from starsec.secrecy import (
    Beamformer,
    StarCoefficients,
    Strategy,
    secrecy_rates,
    stack_coefficients,
    with_eve_errors,
    wrap_phase,
    )
from starsec.tensor import (
    ComplexMatrix,
    Tape,
    Tensor,
    backward,
    complex_matvec,
    concat,
    l2_norm,
    layer_norm,
    log2,
    matmul,
    parameter,
    relu,
    sigmoid,
    sqrt,
    square,
    tmax,
    )


logger = logging.getLogger('starsec.graphnn')


CHECKPOINT_VERSION = 1

PARAM_NAMES = ('F1', 'F2', 'fcv_w', 'fcv_b', 'fcw_w', 'fcw_b')

# Keeps the paired phase head finite when both raw outputs vanish.
_PAIRED_EPS = 1e-24


class PhaseHead(enum.Enum):
    """How FC_v outputs become phases.

    ``faithful``: sigmoid output is cos(theta), sin(theta) = +sqrt(1 - cos^2),
    so phases lie in (0, pi/2).  ``full``: cos(theta) = 2u - 1, phases in
    (0, pi).  ``paired``: raw (cos, sin) pairs normalized to unit modulus,
    phases anywhere in [0, 2pi).
    """

    FAITHFUL = 'faithful'
    FULL = 'full'
    PAIRED = 'paired'


class BeamHead(enum.Enum):
    """``fc``: FC_w on Bob's row.  ``layernorm``: layer-normalized first 2N
    hidden features of Bob's row, without FC_w."""

    FC = 'fc'
    LAYERNORM = 'layernorm'


class LossVariant(enum.Enum):
    CLAMPED = 'clamped'
    UNCLAMPED = 'unclamped'


def _parse_enum(kls, value, path):
    if isinstance(value, kls):
        return value
    try:
        return kls(value)
    except ValueError:
        raise ConfigError(path, 'expected one of %s, got %r'
                          % (', '.join(m.value for m in kls), value))


@dataclass(frozen=True)
class GnnConfig:
    """Architecture of a model; stored as the checkpoint header."""

    n_antennas: int
    n_elements: int
    hidden: int = 256
    strategy: Strategy = Strategy.AN
    phase_head: PhaseHead = PhaseHead.FAITHFUL
    w_head: BeamHead = BeamHead.FC
    symmetrize: bool = False
    h_scale: float = 1.0
    d_scale: float = 1.0

    def __post_init__(self):
        require(self.n_antennas >= 1, 'model.n_antennas', 'must be >= 1')
        require(self.n_elements >= 1, 'model.n_elements', 'must be >= 1')
        require(self.hidden >= 1, 'model.hidden', 'must be >= 1')
        require(self.h_scale > 0 and self.d_scale > 0, 'model.scale',
                'feature scales must be positive')
        if self.w_head is BeamHead.LAYERNORM:
            require(self.hidden >= 2 * self.n_antennas, 'model.hidden',
                    'layernorm beam head needs hidden >= 2N')
        if self.hidden < self.v_width or self.hidden < 2 * self.n_antennas:
            logger.debug('hidden width %d is below the head widths (%d, %d)',
                         self.hidden, self.v_width, 2 * self.n_antennas)

    @property
    def feature_width(self) -> int:
        n, l_count = self.n_antennas, self.n_elements
        return 2 * n + 2 * n * l_count

    @property
    def sigmoid_width(self) -> int:
        """Number of leading FC_v outputs passed through the sigmoid."""
        if self.phase_head is PhaseHead.PAIRED:
            return 0 if self.strategy is Strategy.IRS_ONLY else self.n_elements
        return self.v_width

    @property
    def v_width(self) -> int:
        l_count = self.n_elements
        per_phase = 2 if self.phase_head is PhaseHead.PAIRED else 1
        if self.strategy is Strategy.IRS_ONLY:
            return per_phase * l_count
        return l_count + 2 * per_phase * l_count

    @classmethod
    def for_scenario(cls, scenario: ScenarioConfig, strategy: Strategy = Strategy.AN,
                     hidden: int = 256, phase_head: PhaseHead = PhaseHead.FAITHFUL,
                     w_head: BeamHead = BeamHead.FC, symmetrize: bool = False,
                     scale_features: bool = True) -> "GnnConfig":
        h_scale = d_scale = 1.0
        if scale_features:
            direct, cascaded = scenario.reference_gains()
            h_scale = 1.0 / math.sqrt(direct)
            d_scale = 1.0 / math.sqrt(cascaded)
        return cls(n_antennas=scenario.n_antennas,
                   n_elements=scenario.n_elements, hidden=hidden,
                   strategy=strategy, phase_head=phase_head, w_head=w_head,
                   symmetrize=symmetrize, h_scale=h_scale, d_scale=d_scale)

    def to_dict(self) -> Dict[str, Any]:
        return {
            'n_antennas': self.n_antennas,
            'n_elements': self.n_elements,
            'hidden': self.hidden,
            'strategy': self.strategy.value,
            'phase_head': self.phase_head.value,
            'w_head': self.w_head.value,
            'symmetrize': self.symmetrize,
            'h_scale': self.h_scale,
            'd_scale': self.d_scale,
        }

    @classmethod
    def from_dict(cls, d: Dict[str, Any], prefix: str = 'model') -> "GnnConfig":
        reject_unknown(d, [f.name for f in dataclasses.fields(cls)], prefix)
        return cls(
            n_antennas=get_number(d, 'n_antennas', prefix, integer=True),
            n_elements=get_number(d, 'n_elements', prefix, integer=True),
            hidden=get_number(d, 'hidden', prefix, default=256, integer=True),
            strategy=Strategy.parse(d.get('strategy', 'an')),
            phase_head=_parse_enum(PhaseHead, d.get('phase_head', 'faithful'),
                                   f'{prefix}.phase_head'),
            w_head=_parse_enum(BeamHead, d.get('w_head', 'fc'), f'{prefix}.w_head'),
            symmetrize=bool(d.get('symmetrize', False)),
            h_scale=get_number(d, 'h_scale', prefix, default=1.0),
            d_scale=get_number(d, 'd_scale', prefix, default=1.0))


@dataclass
class ModelParams:
    """Weights of GCN1, GCN2, FC_v and FC_w, each with a gradient buffer."""

    config: GnnConfig
    F1: Tensor
    F2: Tensor
    fcv_w: Tensor
    fcv_b: Tensor
    fcw_w: Tensor
    fcw_b: Tensor

    def arrays(self) -> Dict[str, Tensor]:
        return {name: getattr(self, name) for name in PARAM_NAMES}

    def tensors(self) -> List[Tensor]:
        return [getattr(self, name) for name in PARAM_NAMES]

    def zero_grad(self) -> None:
        for t in self.tensors():
            t.zero_grad()

    def copy(self) -> "ModelParams":
        return ModelParams(self.config, **{
            name: parameter(t.data.copy()) for name, t in self.arrays().items()})

    def expected_shapes(self) -> Dict[str, Tuple[int, ...]]:
        c = self.config
        return {
            'F1': (c.feature_width, c.hidden),
            'F2': (c.hidden, c.hidden),
            'fcv_w': (c.hidden, c.v_width),
            'fcv_b': (c.v_width,),
            'fcw_w': (c.hidden, 2 * c.n_antennas),
            'fcw_b': (2 * c.n_antennas,),
        }

    def validate(self) -> None:
        for name, shape in self.expected_shapes().items():
            actual = getattr(self, name).shape
            if actual != shape:
                raise ShapeError('%s is %r, expected %r' % (name, actual, shape))


@dataclass
class GraphInput:
    """Node features ``X`` (``(..., K+2, 2N+2NL)``) and adjacency."""

    X: np.ndarray
    A: np.ndarray
    A_norm: np.ndarray

    @property
    def batched(self) -> bool:
        return self.X.ndim == 3


def build_features(ch, h_scale: float = 1.0, d_scale: float = 1.0) -> np.ndarray:
    """Stack the STAR-IRS, Bob and Eve feature vectors into ``X``.

    Each row is ``[Re h, Im h, Re d, Im d]`` with ``d`` the row-major
    vectorized cascaded channel; row 0 is the mean of the other rows.
    """
    links = as_links(ch)
    lead = links.h_b.shape[:-1]
    d_b = links.d_b.reshape(lead + (-1,))
    d_k = links.d_k.reshape(links.h_k.shape[:-1] + (-1,))
    h = np.concatenate([links.h_b[..., None, :], links.h_k], axis=-2) * h_scale
    d = np.concatenate([d_b[..., None, :], d_k], axis=-2) * d_scale
    users = np.concatenate([h.real, h.imag, d.real, d.imag], axis=-1)
    mean = users.mean(axis=-2, keepdims=True)
    return np.concatenate([mean, users], axis=-2)


def build_adjacency(n_eves: int) -> np.ndarray:
    """STAR-IRS and Bob are linked; every Eve points at both."""
    if n_eves < 1:
        raise DomainError('need at least one Eve, got %d' % n_eves)
    size = n_eves + 2
    A = np.zeros((size, size))
    A[0, 1] = A[1, 0] = 1.0
    A[2:, 0] = A[2:, 1] = 1.0
    return A


def normalize_adjacency(A: np.ndarray) -> np.ndarray:
    """``D^{-1/2} (A + I) D^{-1/2}`` with D the row degrees of ``A + I``."""
    A = np.asarray(A, dtype=np.float64)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ShapeError('adjacency must be square, got %r' % (A.shape,))
    A_hat = A + np.eye(A.shape[0])
    degree = A_hat.sum(axis=1)
    if np.any(degree <= 0):
        raise DomainError('node without any connection')
    inv_sqrt = 1.0 / np.sqrt(degree)
    return inv_sqrt[:, None] * A_hat * inv_sqrt[None, :]


def build_graph(ch, config: GnnConfig) -> GraphInput:
    links = as_links(ch)
    if links.n_antennas != config.n_antennas or links.n_elements != config.n_elements:
        raise UsageError('channel is N=%d, L=%d but the model expects N=%d, L=%d'
                         % (links.n_antennas, links.n_elements,
                            config.n_antennas, config.n_elements))
    A = build_adjacency(links.n_eves)
    if config.symmetrize:
        A = np.maximum(A, A.T)
    return GraphInput(X=build_features(links, config.h_scale, config.d_scale),
                      A=A, A_norm=normalize_adjacency(A))


def gcn_layer(X, A_norm, F) -> Tensor:
    """``ReLU(A_norm X F)``."""
    return relu(matmul(matmul(A_norm, X), F))


def init_params(rng: np.random.Generator, n_antennas: int, n_elements: int,
                hidden: int = 256, config: Optional[GnnConfig] = None) -> ModelParams:
    """Glorot-uniform weights, zero biases."""
    if config is None:
        config = GnnConfig(n_antennas=n_antennas, n_elements=n_elements,
                           hidden=hidden)
    elif (config.n_antennas, config.n_elements, config.hidden) != (
            n_antennas, n_elements, hidden):
        raise UsageError('init_params dimensions disagree with config')

    def glorot(fan_in, fan_out):
        limit = math.sqrt(6.0 / (fan_in + fan_out))
        return parameter(rng.uniform(-limit, limit, size=(fan_in, fan_out)))

    return ModelParams(
        config=config,
        F1=glorot(config.feature_width, hidden),
        F2=glorot(hidden, hidden),
        fcv_w=glorot(hidden, config.v_width),
        fcv_b=parameter(np.zeros(config.v_width)),
        fcw_w=glorot(hidden, 2 * n_antennas),
        fcw_b=parameter(np.zeros(2 * n_antennas)))


@dataclass
class Heads:
    """Post-processed network outputs, as tensors (taped while training)."""

    beta_r: Optional[Tensor]
    cos_r: Tensor
    sin_r: Tensor
    cos_t: Optional[Tensor]
    sin_t: Optional[Tensor]
    w: ComplexMatrix


def trunk(params: ModelParams, X, A_norm) -> Tuple[Tensor, Tensor]:
    """Two GCN layers; returns the STAR-IRS row and Bob's row."""
    H = gcn_layer(X, A_norm, params.F1)
    H = gcn_layer(H, A_norm, params.F2)
    return H[..., 0, :], H[..., 1, :]


def activate_v(z: Tensor, config: GnnConfig) -> Tensor:
    s = config.sigmoid_width
    if s == config.v_width:
        return sigmoid(z)
    if s == 0:
        return z
    return concat([sigmoid(z[..., :s]), z[..., s:]], axis=-1)


def w_preactivation(params: ModelParams, bob_row: Tensor) -> Tensor:
    if params.config.w_head is BeamHead.LAYERNORM:
        return bob_row[..., :2 * params.config.n_antennas]
    return matmul(bob_row, params.fcw_w) + params.fcw_b


def _phase_pair(v: Tensor, start: int, l_count: int, head: PhaseHead):
    if head is PhaseHead.PAIRED:
        a = v[..., start:start + l_count]
        b = v[..., start + l_count:start + 2 * l_count]
        r = sqrt(square(a) + square(b) + _PAIRED_EPS)
        return a / r, b / r, start + 2 * l_count
    u = v[..., start:start + l_count]
    cos = u if head is PhaseHead.FAITHFUL else 2.0 * u - 1.0
    return cos, sqrt(1.0 - square(cos)), start + l_count


def heads_from_activations(v: Tensor, w_pre: Tensor, config: GnnConfig,
                           p_max: float) -> Heads:
    """Turn activated FC_v outputs and the beam pre-activation into Heads.

    Every output satisfies the power, energy-split and phase constraints
    by construction.
    """
    l_count = config.n_elements
    if config.strategy is Strategy.IRS_ONLY:
        beta_r = None
        cos_r, sin_r, _ = _phase_pair(v, 0, l_count, config.phase_head)
        cos_t = sin_t = None
    else:
        beta_r = v[..., :l_count]
        cos_r, sin_r, nxt = _phase_pair(v, l_count, l_count, config.phase_head)
        cos_t, sin_t, _ = _phase_pair(v, nxt, l_count, config.phase_head)

    raw = layer_norm(w_pre) if config.w_head is BeamHead.LAYERNORM else w_pre
    # An all-zero raw beam has no direction; fall back to antenna 0.
    dead = np.all(raw.data == 0, axis=-1, keepdims=True)
    if np.any(dead):
        fallback = np.zeros(raw.shape)
        fallback[..., :1] = dead
        raw = raw + fallback
    scaled = raw * (math.sqrt(p_max) / l2_norm(raw, axis=-1, keepdims=True))
    n = config.n_antennas
    w = ComplexMatrix(scaled[..., :n], scaled[..., n:])
    return Heads(beta_r, cos_r, sin_r, cos_t, sin_t, w)


def network(params: ModelParams, X, A_norm, p_max: float) -> Heads:
    """Full forward pass on (batched) features; taped when a Tape is active."""
    if X.shape[-1] != params.config.feature_width:
        raise UsageError('features are %d wide but the model expects %d'
                         % (X.shape[-1], params.config.feature_width))
    irs_row, bob_row = trunk(params, X, A_norm)
    v = activate_v(matmul(irs_row, params.fcv_w) + params.fcv_b, params.config)
    return heads_from_activations(v, w_preactivation(params, bob_row),
                                  params.config, p_max)


def heads_to_outputs(heads: Heads, config: GnnConfig,
                     p_max: float) -> List[Tuple[Beamformer, StarCoefficients]]:
    """Detach Heads into per-sample (Beamformer, StarCoefficients)."""
    w = heads.w.numpy()
    theta_r = wrap_phase(np.arctan2(heads.sin_r.data, heads.cos_r.data))
    if heads.beta_r is None:
        beta_r = np.ones_like(theta_r)
        theta_t = np.zeros_like(theta_r)
    else:
        beta_r = heads.beta_r.data
        theta_t = wrap_phase(np.arctan2(heads.sin_t.data, heads.cos_t.data))
    outputs = []
    for i in range(w.shape[0]):
        info = theta_t[i].copy() if config.strategy is Strategy.CONV else None
        outputs.append((
            Beamformer(w=w[i].copy(), p_max=p_max),
            StarCoefficients(beta_r=beta_r[i].copy(), theta_r=theta_r[i].copy(),
                             theta_t_an=theta_t[i].copy(), theta_t_info=info)))
    return outputs


def _check_request(params: ModelParams, n_elements: Optional[int],
                   strategy: Optional[Strategy]) -> None:
    if n_elements is not None and n_elements != params.config.n_elements:
        raise UsageError('model has L=%d, asked for L=%d'
                         % (params.config.n_elements, n_elements))
    if strategy is not None and Strategy.parse(strategy) is not params.config.strategy:
        raise UsageError('model was built for strategy %s, asked for %s'
                         % (params.config.strategy.value, Strategy.parse(strategy).value))


def forward(params: ModelParams, graph: GraphInput, p_max: float,
            n_elements: Optional[int] = None,
            strategy: Optional[Strategy] = None) -> Tuple[Beamformer, StarCoefficients]:
    """Run the network on one graph and post-process its outputs."""
    _check_request(params, n_elements, strategy)
    if graph.batched:
        raise UsageError('forward takes a single graph; use forward_many')
    heads = network(params, Tensor(graph.X[None]), Tensor(graph.A_norm), p_max)
    return heads_to_outputs(heads, params.config, p_max)[0]


def forward_many(params: ModelParams, links_list: Sequence[Links],
                 p_max: float) -> List[Tuple[Beamformer, StarCoefficients]]:
    """Batched inference over a channel set."""
    if not links_list:
        raise UsageError('empty channel set')
    batch = stack_links(links_list)
    graph = build_graph(batch, params.config)
    heads = network(params, Tensor(graph.X), Tensor(graph.A_norm), p_max)
    return heads_to_outputs(heads, params.config, p_max)


def taped_rates(heads: Heads, links: Links, strategy: Strategy,
                clamp: bool = True) -> Tensor:
    """Secrecy rate of every sample of a batched channel set, as a tensor."""
    w = heads.w
    w_col = w.reshape(w.shape + (1,))
    d_b = ComplexMatrix.from_numpy(links.d_b)
    q_b = complex_matvec(d_b, w_col).reshape(w.shape[:-1] + (links.n_elements,))
    if heads.beta_r is None:
        omega_r = ComplexMatrix(heads.cos_r, heads.sin_r)
    else:
        amp = sqrt(heads.beta_r)
        omega_r = ComplexMatrix(amp * heads.cos_r, amp * heads.sin_r)
    h_b = ComplexMatrix.from_numpy(links.h_b)
    bob = (h_b.conj() * w).sum(axis=-1) + (omega_r * q_b).sum(axis=-1)
    gamma_b = bob.abs2() / Tensor(links.sigma2_b)

    lead = w.shape[:-1]
    w_k = w.reshape(lead + (1,) + w.shape[-1:])
    h_k = ComplexMatrix.from_numpy(links.h_k)
    direct = (h_k.conj() * w_k).sum(axis=-1)
    sigma2_k = Tensor(links.sigma2_k)
    if strategy is Strategy.IRS_ONLY:
        gamma_k = direct.abs2() / sigma2_k
    else:
        d_k = ComplexMatrix.from_numpy(links.d_k)
        q_k = complex_matvec(d_k, w_col.reshape(lead + (1,) + w_col.shape[-2:]))
        q_k = q_k.reshape(lead + (links.n_eves, links.n_elements))
        amp_t = sqrt(1.0 - heads.beta_r)
        omega_t = ComplexMatrix(amp_t * heads.cos_t, amp_t * heads.sin_t)
        omega_t = omega_t.reshape(lead + (1, links.n_elements))
        through = (omega_t * q_k).sum(axis=-1)
        if strategy is Strategy.AN:
            gamma_k = direct.abs2() / (through.abs2() + sigma2_k)
        else:
            gamma_k = (direct + through).abs2() / sigma2_k
    gap = log2(1.0 + gamma_b) - tmax(log2(1.0 + gamma_k), axis=-1)
    return relu(gap) if clamp else gap


@dataclass(frozen=True)
class TrainConfig:
    """SGD settings.

    Each iteration draws ``samples_per_iteration`` fresh channels (default:
    one batch) and takes one SGD step per batch of ``batch_size``.
    """

    learning_rate: float = 1e-3
    batch_size: int = 64
    iterations: int = 500
    samples_per_iteration: Optional[int] = None
    loss_variant: LossVariant = LossVariant.CLAMPED
    csi_error: Optional[CsiErrorConfig] = None
    mc_samples: int = 10
    hidden: int = 256
    phase_head: PhaseHead = PhaseHead.FAITHFUL
    w_head: BeamHead = BeamHead.FC
    symmetrize: bool = False
    scale_features: bool = True
    rng_seed: int = 0
    log_interval: int = 50

    def __post_init__(self):
        require(self.learning_rate >= 0, 'train.learning_rate', 'must be >= 0')
        require(self.batch_size >= 1, 'train.batch_size', 'must be >= 1')
        require(self.iterations >= 1, 'train.iterations', 'must be >= 1')
        require(self.mc_samples >= 1, 'train.mc_samples', 'must be >= 1')
        require(self.log_interval >= 1, 'train.log_interval', 'must be >= 1')
        if self.samples_per_iteration is not None:
            require(self.samples_per_iteration >= 1,
                    'train.samples_per_iteration', 'must be >= 1')

    @property
    def samples(self) -> int:
        return self.samples_per_iteration or self.batch_size

    def model_config(self, scenario: ScenarioConfig, strategy: Strategy) -> GnnConfig:
        return GnnConfig.for_scenario(
            scenario, strategy=strategy, hidden=self.hidden,
            phase_head=self.phase_head, w_head=self.w_head,
            symmetrize=self.symmetrize, scale_features=self.scale_features)

    def replace(self, **changes) -> "TrainConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> Dict[str, Any]:
        return {
            'learning_rate': self.learning_rate,
            'batch_size': self.batch_size,
            'iterations': self.iterations,
            'samples_per_iteration': self.samples_per_iteration,
            'loss_variant': self.loss_variant.value,
            'csi_error': None if self.csi_error is None else self.csi_error.to_dict(),
            'mc_samples': self.mc_samples,
            'hidden': self.hidden,
            'phase_head': self.phase_head.value,
            'w_head': self.w_head.value,
            'symmetrize': self.symmetrize,
            'scale_features': self.scale_features,
            'rng_seed': self.rng_seed,
            'log_interval': self.log_interval,
        }

    @classmethod
    def from_dict(cls, d: Dict[str, Any], prefix: str = 'train') -> "TrainConfig":
        reject_unknown(d, [f.name for f in dataclasses.fields(cls)], prefix)
        defaults = cls()
        csi = d.get('csi_error')
        spi = d.get('samples_per_iteration')
        return cls(
            learning_rate=get_number(d, 'learning_rate', prefix, default=defaults.learning_rate),
            batch_size=get_number(d, 'batch_size', prefix, default=defaults.batch_size, integer=True),
            iterations=get_number(d, 'iterations', prefix, default=defaults.iterations, integer=True),
            samples_per_iteration=None if spi is None else get_number(
                d, 'samples_per_iteration', prefix, integer=True),
            loss_variant=_parse_enum(LossVariant, d.get('loss_variant', 'clamped'),
                                     f'{prefix}.loss_variant'),
            csi_error=None if csi is None else CsiErrorConfig.from_dict(
                csi, f'{prefix}.csi_error'),
            mc_samples=get_number(d, 'mc_samples', prefix, default=defaults.mc_samples, integer=True),
            hidden=get_number(d, 'hidden', prefix, default=defaults.hidden, integer=True),
            phase_head=_parse_enum(PhaseHead, d.get('phase_head', 'faithful'),
                                   f'{prefix}.phase_head'),
            w_head=_parse_enum(BeamHead, d.get('w_head', 'fc'), f'{prefix}.w_head'),
            symmetrize=bool(d.get('symmetrize', False)),
            scale_features=bool(d.get('scale_features', True)),
            rng_seed=get_number(d, 'rng_seed', prefix, default=0, integer=True),
            log_interval=get_number(d, 'log_interval', prefix, default=defaults.log_interval,
                                    integer=True))


@dataclass
class IterationRecord:
    iteration: int
    loss: float
    mean_rate: float
    stderr: float


@dataclass
class TrainHistory:
    records: List[IterationRecord] = field(default_factory=list)

    def mean_rates(self) -> np.ndarray:
        return np.array([r.mean_rate for r in self.records])

    def losses(self) -> np.ndarray:
        return np.array([r.loss for r in self.records])


@dataclass
class Batch:
    """Channels for one loss evaluation.

    ``features`` are what the network sees (estimated Eve CSI when CSI is
    imperfect); ``truth`` are the channels the rate is evaluated on.
    """

    features: Links
    truth: Links


def make_batch(links_list: Sequence[Links], csi_error: Optional[CsiErrorConfig],
               rng: np.random.Generator) -> Batch:
    truth = stack_links(links_list)
    if csi_error is None:
        return Batch(features=truth, truth=truth)
    estimates = stack_links([perturb_csi(li, csi_error, rng).links
                             for li in links_list])
    return Batch(features=estimates, truth=truth)


def loss(params: ModelParams, batch: Batch, p_max: float,
         variant: LossVariant = LossVariant.CLAMPED,
         csi_error: Optional[CsiErrorConfig] = None, mc_samples: int = 1,
         rng: Optional[np.random.Generator] = None) -> Tuple[Tensor, np.ndarray]:
    """Negative mean secrecy rate of a batch.

    With ``csi_error`` the rate of each sample is averaged over
    ``mc_samples`` fresh error draws around the estimated Eve channels.

    :return: (loss tensor, clamped per-sample rates)
    """
    features = batch.features
    if len(features) == 0:
        raise UsageError('empty batch')
    strategy = params.config.strategy
    clamp = variant is LossVariant.CLAMPED
    graph = build_graph(features, params.config)
    heads = network(params, Tensor(graph.X), Tensor(graph.A_norm), p_max)
    if csi_error is None:
        rates = taped_rates(heads, batch.truth, strategy, clamp)
        reported = np.maximum(rates.data, 0.0)
    else:
        if rng is None:
            raise UsageError('imperfect-CSI loss needs an rng')
        total = None
        reported = np.zeros(len(features))
        for _ in range(mc_samples):
            h_err = complex_gaussian(features.h_k.shape, csi_error.sigma2_h, rng)
            d_err = complex_gaussian(features.d_k.shape, csi_error.sigma2_d, rng)
            draw = taped_rates(heads, with_eve_errors(features, h_err, d_err),
                               strategy, clamp)
            total = draw if total is None else total + draw
            reported += np.maximum(draw.data, 0.0)
        rates = total * (1.0 / mc_samples)
        reported /= mc_samples
    return -rates.mean(), reported


def _stderr(values: np.ndarray) -> float:
    if len(values) < 2:
        return 0.0
    return float(np.std(values, ddof=1) / math.sqrt(len(values)))


def train(cfg: TrainConfig, scenario: ScenarioConfig,
          strategy: Strategy = Strategy.AN,
          params: Optional[ModelParams] = None) -> Tuple[ModelParams, TrainHistory]:
    """Unsupervised SGD on freshly sampled channels; deterministic per seed."""
    strategy = Strategy.parse(strategy)
    init_seq, data_seq = np.random.SeedSequence(cfg.rng_seed).spawn(2)
    model_config = cfg.model_config(scenario, strategy)
    if params is None:
        params = init_params(np.random.default_rng(init_seq),
                             scenario.n_antennas, scenario.n_elements,
                             cfg.hidden, model_config)
    params.validate()
    rng = np.random.default_rng(data_seq)
    history = TrainHistory()
    logger.info('Training %s model: N=%d L=%d K=%d, %d iterations',
                strategy.label, scenario.n_antennas, scenario.n_elements,
                scenario.n_eves, cfg.iterations)
    for iteration in range(1, cfg.iterations + 1):
        links_list = sample_links(scenario, rng, cfg.samples)
        losses = []
        rates = []
        for start in range(0, cfg.samples, cfg.batch_size):
            batch = make_batch(links_list[start:start + cfg.batch_size],
                               cfg.csi_error, rng)
            params.zero_grad()
            with Tape():
                value, batch_rates = loss(
                    params, batch, scenario.p_max, cfg.loss_variant,
                    cfg.csi_error, cfg.mc_samples, rng)
            if not np.isfinite(value.item()):
                raise NumericError('loss became %r at iteration %d'
                                   % (value.item(), iteration))
            backward(value)
            for name, t in params.arrays().items():
                if t.grad is None:
                    continue
                if not np.all(np.isfinite(t.grad)):
                    raise NumericError('gradient of %s is not finite at '
                                       'iteration %d' % (name, iteration))
                t.data = t.data - cfg.learning_rate * t.grad
            losses.append(value.item())
            rates.append(batch_rates)
        rates = np.concatenate(rates)
        record = IterationRecord(iteration=iteration,
                                 loss=float(np.mean(losses)),
                                 mean_rate=float(np.mean(rates)),
                                 stderr=_stderr(rates))
        history.records.append(record)
        logger.debug('iteration %d: loss %.6f, mean rate %.6f',
                     iteration, record.loss, record.mean_rate)
        if iteration % cfg.log_interval == 0 or iteration == cfg.iterations:
            logger.info('iteration %d/%d: mean secrecy rate %.4f bits/s/Hz',
                        iteration, cfg.iterations, record.mean_rate)
    return params, history


def evaluate_rates(params: ModelParams, links_list: Sequence[Links],
                   p_max: float) -> np.ndarray:
    """Clamped secrecy rate of the model on each channel of a set."""
    outputs = forward_many(params, links_list, p_max)
    batch = stack_links(links_list)
    w = np.stack([bf.w for bf, _ in outputs])
    coeffs = stack_coefficients([c for _, c in outputs])
    return secrecy_rates(batch, coeffs, w, params.config.strategy)


def save_checkpoint(path: str, params: ModelParams) -> None:
    """Write a ``.npz`` checkpoint: JSON header plus float64 arrays."""
    header = {'version': CHECKPOINT_VERSION, 'model': params.config.to_dict()}
    arrays = {name: np.ascontiguousarray(t.data, dtype='<f8')
              for name, t in params.arrays().items()}
    with open(path, 'wb') as f:
        np.savez(f, header=np.array(json.dumps(header, sort_keys=True)), **arrays)
    logger.debug('Wrote checkpoint %s', path)


def read_checkpoint_header(path: str) -> Dict[str, Any]:
    with np.load(path, allow_pickle=False) as data:
        return json.loads(str(data['header'].item()))


def load_checkpoint(path: str) -> ModelParams:
    with np.load(path, allow_pickle=False) as data:
        header = json.loads(str(data['header'].item()))
        if header.get('version') != CHECKPOINT_VERSION:
            raise UsageError('%s: unsupported checkpoint version %r'
                             % (path, header.get('version')))
        config = GnnConfig.from_dict(header['model'])
        params = ModelParams(config, **{
            name: parameter(np.array(data[name], dtype=np.float64))
            for name in PARAM_NAMES})
    params.validate()
    return params
