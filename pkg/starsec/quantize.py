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

"""Fixed-point emulation of the GNN inference path.

Values are stored as integers with a shared per-array format Q(w, f):
signed two's complement, ``w`` bits in total, ``f`` of them fractional,
round-to-nearest-even and saturating.  Inside a layer everything is
integer arithmetic: products accumulate at full width and are
re-quantized to the activation format once per matrix product.  ReLU and
sigmoid go through lookup tables.  Only the constraint-enforcing
post-processing (square roots, beam normalization) runs in floating
point, so quantized outputs are always feasible.

Quantized model file layout (little-endian)::

    4 bytes   magic b'SSQM'
    u16       format version
    u32       length of the JSON header in bytes
    ...       JSON header (utf-8): model config, formats, shapes, saturation
    ...       every array of PARAM_NAMES in order, row-major int32
"""

import dataclasses
import json
import logging
import struct
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.special import expit

from starsec import NumericError, UsageError
from starsec.channel import Links, stack_links
from starsec.config import get_number, reject_unknown, require
from starsec.graphnn import (
    PARAM_NAMES,
    BeamHead,
    GnnConfig,
    ModelParams,
    build_graph,
    evaluate_rates,
    forward_many,
    heads_from_activations,
    heads_to_outputs,
    )
from starsec.secrecy import (
    Beamformer,
    StarCoefficients,
    Strategy,
    secrecy_rates,
    stack_coefficients,
    )
from starsec.tensor import Tensor, parameter


logger = logging.getLogger('starsec.quantize')


MAGIC = b'SSQM'
FILE_VERSION = 1
_PREAMBLE = struct.Struct('<4sHI')

LUT_SIZE = 1024

# Half-width of the sigmoid table; beyond it the output is within 1.2e-7
# of its limit.
SIGMOID_SPAN = 16.0


@dataclass(frozen=True)
class FixedPointFormat:
    """Signed fixed-point format with ``word_bits`` bits, ``frac_bits`` fractional."""

    word_bits: int = 16
    frac_bits: int = 8

    def __post_init__(self):
        require(self.word_bits <= 32, 'format.word_bits', 'must be <= 32')
        require(1 <= self.frac_bits < self.word_bits, 'format.frac_bits',
                'must satisfy 1 <= frac_bits < word_bits')

    @property
    def scale(self) -> int:
        return 1 << self.frac_bits

    @property
    def int_min(self) -> int:
        return -(1 << (self.word_bits - 1))

    @property
    def int_max(self) -> int:
        return (1 << (self.word_bits - 1)) - 1

    @property
    def min_value(self) -> float:
        return self.int_min / self.scale

    @property
    def max_value(self) -> float:
        return self.int_max / self.scale

    @property
    def resolution(self) -> float:
        return 1.0 / self.scale

    @property
    def label(self) -> str:
        return 'Q%d.%d' % (self.word_bits, self.frac_bits)

    def saturate(self, ints: np.ndarray) -> Tuple[np.ndarray, int]:
        clipped = np.clip(ints, self.int_min, self.int_max)
        count = int(np.count_nonzero(clipped != ints))
        return clipped.astype(np.int64), count

    def to_dict(self) -> Dict[str, Any]:
        return {'word_bits': self.word_bits, 'frac_bits': self.frac_bits}

    @classmethod
    def from_dict(cls, d: Dict[str, Any], prefix: str = 'format') -> "FixedPointFormat":
        reject_unknown(d, ('word_bits', 'frac_bits'), prefix)
        return cls(word_bits=get_number(d, 'word_bits', prefix, default=16, integer=True),
                   frac_bits=get_number(d, 'frac_bits', prefix, default=8, integer=True))


@dataclass
class FixedPointValue:
    integer: int
    value: float
    saturated: bool


@dataclass
class QuantizedArray:
    ints: np.ndarray
    fmt: FixedPointFormat
    saturated: int

    def dequantize(self) -> np.ndarray:
        return self.ints / float(self.fmt.scale)


def quantize_array(x, fmt: FixedPointFormat) -> QuantizedArray:
    x = np.asarray(x, dtype=np.float64)
    if not np.all(np.isfinite(x)):
        raise NumericError('cannot quantize non-finite values')
    # np.rint rounds half to even; saturate before the integer cast.
    scaled = np.rint(x * fmt.scale)
    clipped = np.clip(scaled, fmt.int_min, fmt.int_max)
    count = int(np.count_nonzero(clipped != scaled))
    return QuantizedArray(clipped.astype(np.int64), fmt, count)


def quantize_value(x: float, fmt: FixedPointFormat) -> FixedPointValue:
    q = quantize_array(np.array([x]), fmt)
    integer = int(q.ints[0])
    return FixedPointValue(integer=integer, value=integer / fmt.scale,
                           saturated=q.saturated > 0)


def round_shift(x: np.ndarray, shift: int) -> np.ndarray:
    """Divide integers by ``2**shift``, rounding half to even."""
    if shift <= 0:
        return x * (1 << -shift)
    q = x >> shift
    r = x - (q << shift)
    half = 1 << (shift - 1)
    return q + (r > half) + ((r == half) & (q & 1))


def requantize(acc: np.ndarray, frac: int, fmt: FixedPointFormat) -> Tuple[np.ndarray, int]:
    """Bring an accumulator with ``frac`` fractional bits into ``fmt``."""
    return fmt.saturate(round_shift(acc, frac - fmt.frac_bits))


def _mac(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Integer matrix product, exact at any width."""
    bound = np.max(np.abs(a).astype(np.float64) @ np.abs(b).astype(np.float64),
                   initial=0.0)
    if bound < 2.0 ** 62:
        return np.matmul(a.astype(np.int64), b.astype(np.int64))
    logger.debug('accumulator bound %.3g exceeds int64, using exact integers',
                 bound)
    return np.matmul(a.astype(object), b.astype(object))


class LookupTable(object):
    """Piecewise-linear table over an integer input interval.

    ``size`` segments of equal power-of-two width cover ``[lo, hi)``;
    inputs outside are clamped to the interval ends.  Interpolation is
    integer-only.
    """

    def __init__(self, fn: Callable[[np.ndarray], np.ndarray],
                 in_fmt: FixedPointFormat, out_fmt: FixedPointFormat,
                 lo: int, hi: int, size: int = LUT_SIZE):
        span = hi - lo
        size = min(size, span)
        step = span // size
        if step * size != span or step & (step - 1):
            raise UsageError('table span %d is not a power-of-two multiple of %d'
                             % (span, size))
        self.in_fmt = in_fmt
        self.out_fmt = out_fmt
        self.lo = lo
        self.hi = hi
        self.size = size
        self.shift = step.bit_length() - 1
        xs = lo + step * np.arange(size + 1, dtype=np.int64)
        # Entries are not saturated so the last segment stays exact.
        self.table = np.rint(fn(xs / float(in_fmt.scale)) * out_fmt.scale).astype(np.int64)

    def __len__(self):
        return self.size

    def lookup(self, q: np.ndarray) -> np.ndarray:
        x = np.clip(np.asarray(q, dtype=np.int64), self.lo, self.hi)
        off = x - self.lo
        idx = np.minimum(off >> self.shift, self.size - 1)
        frac = off - (idx << self.shift)
        y0 = self.table[idx]
        y1 = self.table[idx + 1]
        return y0 + round_shift((y1 - y0) * frac, self.shift)

    def __call__(self, q: np.ndarray) -> np.ndarray:
        return self.out_fmt.saturate(self.lookup(q))[0]


def relu_table(fmt: FixedPointFormat) -> LookupTable:
    return LookupTable(lambda x: np.maximum(x, 0.0), fmt, fmt,
                       fmt.int_min, fmt.int_max + 1)


class SigmoidTable(object):
    """Sigmoid from a table over ``[0, SIGMOID_SPAN)`` and odd symmetry."""

    def __init__(self, in_fmt: FixedPointFormat, out_fmt: FixedPointFormat,
                 size: int = LUT_SIZE):
        hi = min(int(SIGMOID_SPAN * in_fmt.scale), in_fmt.int_max + 1)
        self.half = LookupTable(expit, in_fmt, out_fmt, 0, hi, size)
        self.one = out_fmt.scale
        self.out_fmt = out_fmt

    def __call__(self, q: np.ndarray) -> np.ndarray:
        q = np.asarray(q, dtype=np.int64)
        y = self.half.lookup(np.abs(q))
        y = np.where(q < 0, self.one - y, y)
        return self.out_fmt.saturate(y)[0]


@dataclass
class QuantizedModel:
    """Integer copies of every model array plus their formats."""

    config: GnnConfig
    act_format: FixedPointFormat
    formats: Dict[str, FixedPointFormat]
    arrays: Dict[str, np.ndarray]
    saturation: Dict[str, int] = field(default_factory=dict)

    @property
    def weight_format(self) -> FixedPointFormat:
        return self.formats['F1']

    @property
    def saturated(self) -> int:
        return sum(self.saturation.values())

    def array(self, name: str) -> QuantizedArray:
        return QuantizedArray(self.arrays[name], self.formats[name],
                              self.saturation.get(name, 0))


def quantize_model(params: ModelParams, fmt: FixedPointFormat = FixedPointFormat(),
                   act_format: Optional[FixedPointFormat] = None,
                   formats: Optional[Dict[str, FixedPointFormat]] = None) -> QuantizedModel:
    """Quantize every weight and bias.

    :param fmt: default format of every array
    :param act_format: activation format (defaults to ``fmt``)
    :param formats: per-array overrides keyed by parameter name
    """
    params.validate()
    formats = dict(formats or {})
    unknown = set(formats) - set(PARAM_NAMES)
    if unknown:
        raise UsageError('no such arrays: %s' % ', '.join(sorted(unknown)))
    qmodel = QuantizedModel(config=params.config,
                            act_format=act_format or fmt,
                            formats={}, arrays={})
    for name, t in params.arrays().items():
        array_fmt = formats.get(name, fmt)
        q = quantize_array(t.data, array_fmt)
        qmodel.formats[name] = array_fmt
        qmodel.arrays[name] = q.ints
        qmodel.saturation[name] = q.saturated
        if q.saturated:
            logger.warning('%s: %d of %d values saturated in %s',
                           name, q.saturated, t.data.size, array_fmt.label)
    return qmodel


def dequantize_model(qmodel: QuantizedModel) -> ModelParams:
    return ModelParams(qmodel.config, **{
        name: parameter(qmodel.array(name).dequantize()) for name in PARAM_NAMES})


class _Pipeline(object):
    """Integer inference for one model; tables are built once."""

    def __init__(self, qmodel: QuantizedModel):
        self.q = qmodel
        self.act = qmodel.act_format
        self.relu = relu_table(self.act)
        self.sigmoid = SigmoidTable(self.act, self.act)
        self.saturated = 0

    def _product(self, a, a_frac, b, b_frac) -> np.ndarray:
        out, count = requantize(_mac(a, b), a_frac + b_frac, self.act)
        self.saturated += count
        return out

    def _linear(self, x, w_name, b_name) -> np.ndarray:
        w = self.q.array(w_name)
        b = self.q.array(b_name)
        frac = self.act.frac_bits + w.fmt.frac_bits
        acc = _mac(x, w.ints)
        acc = acc + round_shift(b.ints, b.fmt.frac_bits - frac)
        out, count = requantize(acc, frac, self.act)
        self.saturated += count
        return out

    def _gcn(self, x, a, a_frac, name) -> np.ndarray:
        f = self.q.array(name)
        ax = self._product(a, a_frac, x, self.act.frac_bits)
        return self.relu(self._product(ax, self.act.frac_bits,
                                       f.ints, f.fmt.frac_bits))

    def run(self, X: np.ndarray, A_norm: np.ndarray):
        config = self.q.config
        x = quantize_array(X, self.act)
        a = quantize_array(A_norm, self.q.weight_format)
        self.saturated += x.saturated + a.saturated
        h = self._gcn(x.ints, a.ints, a.fmt.frac_bits, 'F1')
        h = self._gcn(h, a.ints, a.fmt.frac_bits, 'F2')
        irs_row, bob_row = h[..., 0, :], h[..., 1, :]

        z = self._linear(irs_row, 'fcv_w', 'fcv_b')
        s = config.sigmoid_width
        v = np.concatenate([self.sigmoid(z[..., :s]), z[..., s:]], axis=-1)
        if config.w_head is BeamHead.LAYERNORM:
            w_pre = bob_row[..., :2 * config.n_antennas]
        else:
            w_pre = self._linear(bob_row, 'fcw_w', 'fcw_b')
        scale = float(self.act.scale)
        return v / scale, w_pre / scale


def _check_request(qmodel: QuantizedModel, n_elements: Optional[int],
                   strategy: Optional[Strategy]) -> None:
    if n_elements is not None and n_elements != qmodel.config.n_elements:
        raise UsageError('model has L=%d, asked for L=%d'
                         % (qmodel.config.n_elements, n_elements))
    if strategy is not None and Strategy.parse(strategy) is not qmodel.config.strategy:
        raise UsageError('model was built for strategy %s'
                         % qmodel.config.strategy.value)


def _quantized_outputs(qmodel: QuantizedModel, X: np.ndarray, A_norm: np.ndarray,
                       p_max: float) -> List[Tuple[Beamformer, StarCoefficients]]:
    if X.shape[-1] != qmodel.config.feature_width:
        raise UsageError('features are %d wide but the model expects %d'
                         % (X.shape[-1], qmodel.config.feature_width))
    pipeline = _Pipeline(qmodel)
    v, w_pre = pipeline.run(X, A_norm)
    if pipeline.saturated:
        logger.debug('%d activations saturated', pipeline.saturated)
    heads = heads_from_activations(Tensor(v), Tensor(w_pre), qmodel.config, p_max)
    return heads_to_outputs(heads, qmodel.config, p_max)


def quantized_forward(qmodel: QuantizedModel, graph, p_max: float,
                      n_elements: Optional[int] = None,
                      strategy: Optional[Strategy] = None) -> Tuple[Beamformer, StarCoefficients]:
    """Fixed-point counterpart of :func:`starsec.graphnn.forward`."""
    _check_request(qmodel, n_elements, strategy)
    if graph.batched:
        raise UsageError('quantized_forward takes a single graph')
    return _quantized_outputs(qmodel, graph.X[None], graph.A_norm, p_max)[0]


def quantized_forward_many(qmodel: QuantizedModel, links_list: Sequence[Links],
                           p_max: float) -> List[Tuple[Beamformer, StarCoefficients]]:
    if not links_list:
        raise UsageError('empty channel set')
    graph = build_graph(stack_links(links_list), qmodel.config)
    return _quantized_outputs(qmodel, graph.X, graph.A_norm, p_max)


def _rates(model: Union[QuantizedModel, ModelParams], links_list: Sequence[Links],
           p_max: float) -> np.ndarray:
    if isinstance(model, ModelParams):
        return evaluate_rates(model, links_list, p_max)
    outputs = quantized_forward_many(model, links_list, p_max)
    w = np.stack([bf.w for bf, _ in outputs])
    coeffs = stack_coefficients([c for _, c in outputs])
    return secrecy_rates(stack_links(links_list), coeffs, w, model.config.strategy)


def quantized_rates(qmodel: QuantizedModel, links_list: Sequence[Links],
                    p_max: float) -> np.ndarray:
    return _rates(qmodel, links_list, p_max)


@dataclass
class FidelityReport:
    mean_float: float
    mean_quantized: float
    relative_gap: float
    max_sample_gap: float
    count: int

    def to_dict(self) -> Dict[str, Any]:
        return dataclasses.asdict(self)


def compare_fidelity(model: ModelParams, qmodel: Union[QuantizedModel, ModelParams],
                     links_list: Sequence[Links], p_max: float) -> FidelityReport:
    """Paired secrecy-rate comparison on an identical channel set."""
    if not links_list:
        raise UsageError('empty channel set')
    if qmodel.config != model.config:
        raise UsageError('models have different configurations')
    float_rates = _rates(model, links_list, p_max)
    quant_rates = _rates(qmodel, links_list, p_max)
    mean_float = float(np.mean(float_rates))
    mean_quant = float(np.mean(quant_rates))
    gap = abs(mean_quant - mean_float)
    return FidelityReport(
        mean_float=mean_float, mean_quantized=mean_quant,
        relative_gap=gap / mean_float if mean_float > 0 else gap,
        max_sample_gap=float(np.max(np.abs(quant_rates - float_rates))),
        count=len(links_list))


def _flatten(outputs) -> np.ndarray:
    rows = []
    for bf, c in outputs:
        rows.append(np.concatenate([
            bf.w, np.sqrt(c.beta_r) * np.exp(1j * c.theta_r),
            np.sqrt(c.beta_t) * np.exp(1j * c.theta_t_an)]))
    return np.stack(rows)


def output_gap(model: ModelParams, qmodel: QuantizedModel,
               links_list: Sequence[Links], p_max: float) -> float:
    """Mean absolute difference of the beam and surface coefficients."""
    ref = _flatten(forward_many(model, links_list, p_max))
    got = _flatten(quantized_forward_many(qmodel, links_list, p_max))
    return float(np.mean(np.abs(got - ref)))


def save_quantized(path: str, qmodel: QuantizedModel) -> None:
    header = {
        'model': qmodel.config.to_dict(),
        'act_format': qmodel.act_format.to_dict(),
        'formats': {name: qmodel.formats[name].to_dict() for name in PARAM_NAMES},
        'shapes': {name: list(qmodel.arrays[name].shape) for name in PARAM_NAMES},
        'saturation': {name: qmodel.saturation.get(name, 0) for name in PARAM_NAMES},
    }
    blob = json.dumps(header, sort_keys=True).encode('utf-8')
    with open(path, 'wb') as f:
        f.write(_PREAMBLE.pack(MAGIC, FILE_VERSION, len(blob)))
        f.write(blob)
        for name in PARAM_NAMES:
            f.write(qmodel.arrays[name].astype('<i4').tobytes())
    logger.debug('Wrote quantized model %s', path)


def load_quantized(path: str) -> QuantizedModel:
    with open(path, 'rb') as f:
        data = f.read()
    if len(data) < _PREAMBLE.size:
        raise UsageError('%s: truncated quantized model' % path)
    magic, version, length = _PREAMBLE.unpack_from(data)
    if magic != MAGIC:
        raise UsageError('%s: not a quantized model' % path)
    if version != FILE_VERSION:
        raise UsageError('%s: unsupported version %d' % (path, version))
    offset = _PREAMBLE.size
    header = json.loads(data[offset:offset + length].decode('utf-8'))
    offset += length
    qmodel = QuantizedModel(
        config=GnnConfig.from_dict(header['model']),
        act_format=FixedPointFormat.from_dict(header['act_format']),
        formats={}, arrays={})
    for name in PARAM_NAMES:
        shape = tuple(header['shapes'][name])
        count = int(np.prod(shape, dtype=np.int64))
        if offset + 4 * count > len(data):
            raise UsageError('%s: truncated array %s' % (path, name))
        ints = np.frombuffer(data, dtype='<i4', count=count, offset=offset)
        offset += 4 * count
        qmodel.arrays[name] = ints.astype(np.int64).reshape(shape)
        qmodel.formats[name] = FixedPointFormat.from_dict(header['formats'][name])
        qmodel.saturation[name] = int(header['saturation'].get(name, 0))
    return qmodel
