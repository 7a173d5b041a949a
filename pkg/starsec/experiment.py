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

"""Experiment harness.

An experiment is a list of cells, one per sweep value.  Each cell draws
its own held-out channel set from an RNG stream derived from
``(seed, cell index)`` and evaluates every requested scheme on that same
set.  Results go to ``results.csv`` (fixed column order, 9 significant
digits), wall-clock times to ``timings.csv`` and the full experiment spec
to ``manifest.json``; re-running the manifest reproduces ``results.csv``
byte for byte.
"""

import csv
import dataclasses
import json
import logging
import math
import os
import threading
import time
import zlib
from dataclasses import dataclass, field
from multiprocessing.pool import ThreadPool
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from starsec import (
    ConfigError,
    DegenerateChannelError,
    InfeasibleError,
    NumericError,
    Scheme,
    UsageError,
    __version__,
    find_scheme,
    load_plugins,
    )
from starsec.channel import (
    CsiErrorConfig,
    Links,
    ScenarioConfig,
    channel_set_digest,
    perturb_csi,
    sample_links,
    stack_links,
    )
from starsec.config import (
    config_hash,
    get_number,
    load_json,
    profile_overrides,
    reject_unknown,
    require,
    thread_count,
    )
from starsec.graphnn import ModelParams, TrainConfig, load_checkpoint, save_checkpoint, train
from starsec.quantize import FixedPointFormat, quantize_model, quantized_rates
from starsec.secrecy import Strategy, expected_secrecy_rate, secrecy_rates, stack_coefficients


logger = logging.getLogger('starsec.experiment')


KINDS = ('convergence', 'power_sweep', 'eve_sweep', 'element_sweep',
         'csi_sweep', 'quantization', 'baseline_compare')

AXES = {
    'convergence': 'iteration',
    'power_sweep': 'p_max_dbm',
    'eve_sweep': 'n_eves',
    'element_sweep': 'n_elements',
    'csi_sweep': 'csi_nmse',
    'quantization': 'n_elements',
    'baseline_compare': 'p_max_dbm',
}

DEFAULT_SCHEMES = ('AN-GNN', 'CONV-GNN', 'IRS-GNN', 'AN-MRT', 'AN-ZF', 'AN-MMSE')

RESULT_COLUMNS = ('experiment', 'axis', 'axis_value', 'scheme', 'status',
                  'mean_rate', 'stderr', 'samples', 'seed', 'channel_digest')

TIMING_COLUMNS = ('experiment', 'axis_value', 'scheme', 'seconds')

DEFAULT_FORMATS = (FixedPointFormat(16, 8), FixedPointFormat(32, 24))

RESULTS_FILE = 'results.csv'
TIMINGS_FILE = 'timings.csv'
MANIFEST_FILE = 'manifest.json'


def _fmt(value) -> str:
    if value is None:
        return ''
    if isinstance(value, float):
        return '%.9g' % value
    return str(value)


@dataclass(frozen=True)
class ExperimentSpec:
    """Everything needed to reproduce one experiment."""

    kind: str
    scenario: ScenarioConfig = field(default_factory=ScenarioConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    axis_values: Tuple[float, ...] = ()
    schemes: Tuple[str, ...] = DEFAULT_SCHEMES
    seed: int = 0
    eval_channels: int = 1000
    mc_samples: int = 10
    formats: Tuple[FixedPointFormat, ...] = DEFAULT_FORMATS

    def __post_init__(self):
        self.validate()

    @property
    def axis(self) -> str:
        return AXES[self.kind]

    def validate(self) -> None:
        require(self.kind in KINDS, 'experiment.kind',
                'expected one of %s, got %r' % (', '.join(KINDS), self.kind))
        require(len(self.schemes) > 0, 'experiment.schemes', 'must not be empty')
        require(self.eval_channels >= 1, 'experiment.eval_channels', 'must be >= 1')
        require(self.mc_samples >= 1, 'experiment.mc_samples', 'must be >= 1')
        values = self.axis_values
        for a, b in zip(values, values[1:]):
            require(a < b, 'experiment.axis_values', 'must be strictly increasing')
        if self.kind == 'convergence':
            require(not values, 'experiment.axis_values',
                    'convergence runs take no sweep values')
            return
        if self.kind != 'baseline_compare':
            require(len(values) > 0, 'experiment.axis_values', 'must not be empty')
        if self.axis in ('n_eves', 'n_elements'):
            require(all(v >= 1 and int(v) == v for v in values),
                    'experiment.axis_values', 'must be positive integers')
        if self.axis == 'csi_nmse':
            require(all(v >= 0 for v in values), 'experiment.axis_values',
                    'must be >= 0')

    def cell_values(self) -> Tuple[float, ...]:
        if self.kind == 'baseline_compare' and not self.axis_values:
            return (self.scenario.p_max_dbm,)
        if self.kind == 'convergence':
            return (0,)
        return self.axis_values

    def to_dict(self) -> Dict[str, Any]:
        return {
            'kind': self.kind,
            'scenario': self.scenario.to_dict(),
            'train': self.train.to_dict(),
            'axis_values': list(self.axis_values),
            'schemes': list(self.schemes),
            'seed': self.seed,
            'eval_channels': self.eval_channels,
            'mc_samples': self.mc_samples,
            'formats': [f.to_dict() for f in self.formats],
        }

    @classmethod
    def from_dict(cls, d: Dict[str, Any], profile: Optional[str] = None,
                  prefix: str = 'experiment') -> "ExperimentSpec":
        reject_unknown(d, [f.name for f in dataclasses.fields(cls)], prefix)
        scenario_d: Dict[str, Any] = {}
        train_d: Dict[str, Any] = {}
        eval_channels = 1000
        if profile is not None:
            scenario_d.update(profile_overrides(profile, 'scenario'))
            train_d.update(profile_overrides(profile, 'train'))
            eval_channels = profile_overrides(profile, 'eval_channels')['count']
        scenario_d.update(d.get('scenario', {}))
        train_d.update(d.get('train', {}))
        if 'kind' not in d:
            raise ConfigError(f'{prefix}.kind', 'missing')
        values = d.get('axis_values', [])
        if not isinstance(values, list):
            raise ConfigError(f'{prefix}.axis_values', 'expected a list')
        for v in values:
            if isinstance(v, bool) or not isinstance(v, (int, float)):
                raise ConfigError(f'{prefix}.axis_values',
                                  'expected numbers, got %r' % (v,))
        schemes = d.get('schemes', list(DEFAULT_SCHEMES))
        if not isinstance(schemes, list):
            raise ConfigError(f'{prefix}.schemes', 'expected a list of labels')
        formats = d.get('formats')
        return cls(
            kind=d['kind'],
            scenario=ScenarioConfig.from_dict(scenario_d),
            train=TrainConfig.from_dict(train_d),
            axis_values=tuple(values),
            schemes=tuple(schemes),
            seed=get_number(d, 'seed', prefix, default=0, integer=True),
            eval_channels=get_number(d, 'eval_channels', prefix,
                                     default=eval_channels, integer=True),
            mc_samples=get_number(d, 'mc_samples', prefix, default=10, integer=True),
            formats=DEFAULT_FORMATS if formats is None else tuple(
                FixedPointFormat.from_dict(f, f'{prefix}.formats') for f in formats))

    def replace(self, **changes) -> "ExperimentSpec":
        return dataclasses.replace(self, **changes)


def load_spec(path: str, profile: Optional[str] = None) -> ExperimentSpec:
    return ExperimentSpec.from_dict(load_json(path), profile=profile)


@dataclass
class ResultRecord:
    experiment: str
    axis: str
    axis_value: float
    scheme: str
    status: str
    mean_rate: Optional[float]
    stderr: Optional[float]
    samples: int
    seed: int
    channel_digest: str = ''
    seconds: float = 0.0

    def row(self) -> List[str]:
        return [_fmt(getattr(self, name)) for name in RESULT_COLUMNS]

    def timing_row(self) -> List[str]:
        return [self.experiment, _fmt(self.axis_value), self.scheme,
                '%.3f' % self.seconds]


@dataclass
class Evaluation:
    """Mean secrecy rate of a scheme with its per-channel rates."""

    mean: float
    stderr: float
    rates: np.ndarray

    @property
    def count(self) -> int:
        return len(self.rates)


def standard_error(values: np.ndarray) -> float:
    if len(values) < 2:
        return 0.0
    return float(np.std(values, ddof=1) / math.sqrt(len(values)))


def paired_stderr(a: np.ndarray, b: np.ndarray) -> float:
    """Standard error of the mean difference of two paired rate arrays."""
    a, b = np.asarray(a), np.asarray(b)
    if a.shape != b.shape:
        raise UsageError('paired comparison needs equally sized rate arrays')
    return standard_error(a - b)


def _evaluation(rates: np.ndarray) -> Evaluation:
    return Evaluation(mean=float(np.mean(rates)), stderr=standard_error(rates),
                      rates=rates)


def evaluate_scheme(scheme: Scheme, links_list: Sequence[Links],
                    estimates: Optional[Sequence[Links]] = None,
                    csi_error: Optional[CsiErrorConfig] = None,
                    mc_samples: int = 10,
                    rng: Optional[np.random.Generator] = None) -> Evaluation:
    """Mean clamped secrecy rate of a prepared scheme on a channel set.

    With ``csi_error`` the scheme sees ``estimates`` (estimated Eve CSI)
    and each channel's rate is the Monte Carlo expected rate over
    ``mc_samples`` error draws around its estimate.
    """
    if not links_list:
        raise UsageError('cannot evaluate on an empty channel set')
    strategy = scheme.strategy
    if csi_error is None:
        outputs = scheme.beamform_many(links_list)
        w = np.stack([bf.w for bf, _ in outputs])
        coeffs = stack_coefficients([c for _, c in outputs])
        return _evaluation(secrecy_rates(stack_links(links_list), coeffs, w, strategy))
    if estimates is None or rng is None:
        raise UsageError('imperfect-CSI evaluation needs estimates and an rng')
    outputs = scheme.beamform_many(estimates)
    rates = np.array([
        expected_secrecy_rate(est, c, bf.w, csi_error, mc_samples, rng, strategy)[0]
        for est, (bf, c) in zip(estimates, outputs)])
    return _evaluation(rates)


class ModelCache(object):
    """Trained models keyed by the hash of their scenario and training config."""

    def __init__(self, directory: Optional[str] = None):
        self.directory = directory
        self._memory: Dict[str, ModelParams] = {}
        self._lock = threading.Lock()
        self._key_locks: Dict[str, threading.Lock] = {}

    def key(self, scenario: ScenarioConfig, train_cfg: TrainConfig,
            strategy: Strategy) -> str:
        return config_hash({
            'scenario': scenario.to_dict(),
            'train': train_cfg.to_dict(),
            'strategy': strategy.value,
            'version': list(__version__),
        })

    def path(self, key: str) -> Optional[str]:
        if self.directory is None:
            return None
        return os.path.join(self.directory, 'model-%s.npz' % key[:16])

    def get(self, scenario: ScenarioConfig, train_cfg: TrainConfig,
            strategy: Strategy) -> ModelParams:
        key = self.key(scenario, train_cfg, strategy)
        with self._lock:
            key_lock = self._key_locks.setdefault(key, threading.Lock())
        # Cells missing the same model wait for one training run.
        with key_lock:
            if key in self._memory:
                return self._memory[key]
            path = self.path(key)
            if path is not None and os.path.exists(path):
                logger.info('Reusing cached %s model %s', strategy.label, path)
                params = load_checkpoint(path)
            else:
                params, _ = train(train_cfg, scenario, strategy)
                if path is not None:
                    os.makedirs(self.directory, exist_ok=True)
                    save_checkpoint(path, params)
            self._memory[key] = params
            return params


@dataclass
class Cell:
    """One sweep point of an experiment.

    Schemes read ``scenario`` and call ``model(strategy)`` from their
    ``prepare``.
    """

    spec: ExperimentSpec
    index: int
    axis_value: float
    scenario: ScenarioConfig
    train: TrainConfig
    cache: ModelCache
    csi_error: Optional[CsiErrorConfig] = None

    def model(self, strategy: Strategy) -> ModelParams:
        return self.cache.get(self.scenario, self.train, Strategy.parse(strategy))

    def rng(self, *stream: int) -> np.random.Generator:
        return np.random.default_rng([self.spec.seed, self.index] + list(stream))


def _label_stream(label: str) -> int:
    return zlib.crc32(label.encode('utf-8'))


def make_cells(spec: ExperimentSpec, cache: ModelCache) -> List[Cell]:
    cells = []
    for index, value in enumerate(spec.cell_values()):
        scenario = spec.scenario
        csi_error = None
        if spec.axis in ('p_max_dbm',):
            scenario = scenario.replace(p_max_dbm=float(value))
        elif spec.axis in ('n_eves', 'n_elements'):
            scenario = scenario.replace(**{spec.axis: int(value)})
        elif spec.axis == 'csi_nmse' and value > 0:
            csi_error = CsiErrorConfig.relative(float(value), scenario)
        seed = int(np.random.SeedSequence([spec.seed, index]).generate_state(1)[0])
        train_cfg = spec.train.replace(rng_seed=seed, csi_error=csi_error)
        cells.append(Cell(spec=spec, index=index, axis_value=value,
                          scenario=scenario, train=train_cfg, cache=cache,
                          csi_error=csi_error))
    return cells


def _record(cell: Cell, label: str, status: str, evaluation: Optional[Evaluation],
            digest: str, seconds: float, samples: Optional[int] = None) -> ResultRecord:
    return ResultRecord(
        experiment=cell.spec.kind, axis=cell.spec.axis,
        axis_value=cell.axis_value, scheme=label, status=status,
        mean_rate=None if evaluation is None else evaluation.mean,
        stderr=None if evaluation is None else evaluation.stderr,
        samples=samples if samples is not None else (
            0 if evaluation is None else evaluation.count),
        seed=cell.spec.seed, channel_digest=digest, seconds=seconds)


_RECOVERABLE = (NumericError, DegenerateChannelError, InfeasibleError)


def _run_convergence(cell: Cell) -> List[ResultRecord]:
    records = []
    for label in cell.spec.schemes:
        scheme_kls = find_scheme(label)
        if not scheme_kls.trainable:
            logger.warning('%s is not trainable; skipped in convergence run', label)
            continue
        start = time.monotonic()
        try:
            _, history = train(cell.train, cell.scenario, scheme_kls.strategy)
        except NumericError as e:
            logger.warning('%s training failed: %s', label, e)
            records.append(_record(cell, label, 'failed', None, '',
                                   time.monotonic() - start))
            continue
        per_iteration = (time.monotonic() - start) / len(history.records)
        for r in history.records:
            records.append(ResultRecord(
                experiment=cell.spec.kind, axis=cell.spec.axis,
                axis_value=r.iteration, scheme=label, status='ok',
                mean_rate=r.mean_rate, stderr=r.stderr,
                samples=cell.train.samples, seed=cell.spec.seed,
                seconds=per_iteration))
    return records


def _run_quantization(cell: Cell, links_list: Sequence[Links],
                      digest: str) -> List[ResultRecord]:
    records = []
    for label in cell.spec.schemes:
        scheme_kls = find_scheme(label)
        if not scheme_kls.trainable:
            logger.warning('%s has no model to quantize; skipped', label)
            continue
        start = time.monotonic()
        try:
            scheme = scheme_kls()
            scheme.prepare(cell, cell.rng(_label_stream(label)))
            evaluation = evaluate_scheme(scheme, links_list)
        except _RECOVERABLE as e:
            logger.warning('%s failed at %s=%s: %s', label, cell.spec.axis,
                           _fmt(cell.axis_value), e)
            records.append(_record(cell, label, 'failed', None, digest,
                                   time.monotonic() - start))
            continue
        records.append(_record(cell, label, 'ok', evaluation, digest,
                               time.monotonic() - start))
        for fmt in cell.spec.formats:
            start = time.monotonic()
            qmodel = quantize_model(scheme.params, fmt)
            rates = quantized_rates(qmodel, links_list, cell.scenario.p_max)
            records.append(_record(cell, '%s-%s' % (label, fmt.label), 'ok',
                                   _evaluation(rates), digest,
                                   time.monotonic() - start))
    return records


def run_cell(cell: Cell) -> List[ResultRecord]:
    """Evaluate every scheme of the experiment on this cell's channel set."""
    spec = cell.spec
    if spec.kind == 'convergence':
        return _run_convergence(cell)
    links_list = sample_links(cell.scenario, cell.rng(0), spec.eval_channels)
    digest = channel_set_digest(links_list)
    logger.info('%s: %s=%s, %d channels', spec.kind, spec.axis,
                _fmt(cell.axis_value), len(links_list))
    if spec.kind == 'quantization':
        return _run_quantization(cell, links_list, digest)
    estimates = None
    if cell.csi_error is not None:
        csi_rng = cell.rng(1)
        estimates = [perturb_csi(li, cell.csi_error, csi_rng).links
                     for li in links_list]
    records = []
    for label in spec.schemes:
        scheme_kls = find_scheme(label)
        start = time.monotonic()
        if not scheme_kls.can_handle(cell):
            logger.info('%s does not apply at %s=%s', label, spec.axis,
                        _fmt(cell.axis_value))
            records.append(_record(cell, label, 'skipped', None, digest, 0.0))
            continue
        try:
            scheme = scheme_kls()
            scheme.prepare(cell, cell.rng(_label_stream(label)))
            evaluation = evaluate_scheme(
                scheme, links_list, estimates, cell.csi_error,
                spec.mc_samples, cell.rng(2))
        except _RECOVERABLE as e:
            logger.warning('%s failed at %s=%s: %s', label, spec.axis,
                           _fmt(cell.axis_value), e)
            records.append(_record(cell, label, 'failed', None, digest,
                                   time.monotonic() - start))
            continue
        records.append(_record(cell, label, 'ok', evaluation, digest,
                               time.monotonic() - start))
        logger.info('  %s: %.4f +- %.4f bits/s/Hz', label, evaluation.mean,
                    evaluation.stderr)
    return records


@dataclass
class ExperimentResult:
    records: List[ResultRecord]
    results_path: Optional[str] = None
    timings_path: Optional[str] = None
    manifest_path: Optional[str] = None


def write_results(path: str, records: Sequence[ResultRecord]) -> None:
    with open(path, 'w', newline='') as f:
        writer = csv.writer(f, lineterminator='\n')
        writer.writerow(RESULT_COLUMNS)
        for r in records:
            writer.writerow(r.row())


def write_timings(path: str, records: Sequence[ResultRecord]) -> None:
    with open(path, 'w', newline='') as f:
        writer = csv.writer(f, lineterminator='\n')
        writer.writerow(TIMING_COLUMNS)
        for r in records:
            writer.writerow(r.timing_row())


def write_manifest(path: str, spec: ExperimentSpec) -> None:
    manifest = {
        'starsec_version': '.'.join(str(v) for v in __version__),
        'spec': spec.to_dict(),
    }
    with open(path, 'w') as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
        f.write('\n')


def load_manifest(path: str) -> ExperimentSpec:
    d = load_json(path)
    if 'spec' not in d:
        raise ConfigError('manifest.spec', 'missing')
    return ExperimentSpec.from_dict(d['spec'], prefix='manifest.spec')


def run_experiment(spec: ExperimentSpec, out_dir: Optional[str] = None,
                   cache_dir: Optional[str] = None) -> ExperimentResult:
    """Run every cell of ``spec`` and write the result files to ``out_dir``.

    Cells run concurrently when ``STARSEC_THREADS`` is above 1; results are
    written in cell order either way.
    """
    load_plugins()
    for label in spec.schemes:
        find_scheme(label)
    if cache_dir is None and out_dir is not None:
        cache_dir = os.path.join(out_dir, 'models')
    cells = make_cells(spec, ModelCache(cache_dir))
    threads = min(thread_count(), len(cells))
    logger.info('Running %s with %d cell(s) on %d thread(s)',
                spec.kind, len(cells), threads)
    if threads > 1:
        with ThreadPool(threads) as pool:
            per_cell = pool.map(run_cell, cells)
    else:
        per_cell = [run_cell(cell) for cell in cells]
    records = [r for cell_records in per_cell for r in cell_records]
    result = ExperimentResult(records=records)
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        result.results_path = os.path.join(out_dir, RESULTS_FILE)
        result.timings_path = os.path.join(out_dir, TIMINGS_FILE)
        result.manifest_path = os.path.join(out_dir, MANIFEST_FILE)
        write_results(result.results_path, records)
        write_timings(result.timings_path, records)
        write_manifest(result.manifest_path, spec)
        logger.info('Wrote %d rows to %s', len(records), result.results_path)
    return result
