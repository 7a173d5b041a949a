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

import argparse
import csv
import json
import logging
import os
import sys
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from . import (
    StarsecError,
    UsageError,
    iter_schemes,
    load_plugins,
    )
from .channel import ScenarioConfig, sample_links
from .config import get_number, load_json, profile_overrides
from .experiment import (
    DEFAULT_SCHEMES,
    ExperimentSpec,
    evaluate_scheme,
    load_manifest,
    run_experiment,
    )
from .graphnn import (
    LossVariant,
    TrainConfig,
    load_checkpoint,
    read_checkpoint_header,
    save_checkpoint,
    train,
    )
from .quantize import (
    MAGIC,
    FixedPointFormat,
    compare_fidelity,
    load_quantized,
    quantize_model,
    save_quantized,
    )
from .secrecy import Strategy


logger = logging.getLogger('starsec')


def _sections(args) -> Tuple[ScenarioConfig, TrainConfig, int]:
    """Scenario, training config and evaluation-set size for train/eval."""
    d: Dict[str, Any] = load_json(args.config) if args.config else {}
    scenario_d = profile_overrides(args.profile, 'scenario')
    scenario_d.update(d.get('scenario', {}))
    train_d = profile_overrides(args.profile, 'train')
    train_d.update(d.get('train', {}))
    if args.seed is not None:
        train_d['rng_seed'] = args.seed
    if getattr(args, 'loss', None):
        train_d['loss_variant'] = args.loss
    count = profile_overrides(args.profile, 'eval_channels')['count']
    count = get_number(d.get('eval_channels', {}), 'count', 'eval_channels',
                       default=count, integer=True)
    return ScenarioConfig.from_dict(scenario_d), TrainConfig.from_dict(train_d), count


def _channel_seed(args) -> int:
    return 0 if args.seed is None else args.seed


def cmd_train(args) -> int:
    scenario, train_cfg, _ = _sections(args)
    strategy = Strategy.parse(args.strategy)
    params, history = train(train_cfg, scenario, strategy)
    os.makedirs(args.out, exist_ok=True)
    path = os.path.join(args.out, 'checkpoint.npz')
    save_checkpoint(path, params)
    with open(os.path.join(args.out, 'history.csv'), 'w', newline='') as f:
        writer = csv.writer(f, lineterminator='\n')
        writer.writerow(['iteration', 'loss', 'mean_rate', 'stderr'])
        for r in history.records:
            writer.writerow([r.iteration, '%.9g' % r.loss,
                             '%.9g' % r.mean_rate, '%.9g' % r.stderr])
    logger.info('Saved %s model to %s', strategy.label, path)
    return 0


def cmd_eval(args) -> int:
    scenario, train_cfg, count = _sections(args)
    if args.checkpoint:
        from .schemes.gnn import scheme_for_strategy
        params = load_checkpoint(args.checkpoint)
        scheme_kls = scheme_for_strategy(params.config.strategy)
        scheme = scheme_kls(params, scenario.p_max)
        links = sample_links(scenario, np.random.default_rng(_channel_seed(args)), count)
        evaluation = evaluate_scheme(scheme, links)
        logger.info('%s: %.6f +- %.6f bits/s/Hz over %d channels',
                    scheme.label, evaluation.mean, evaluation.stderr,
                    evaluation.count)
        return 0
    spec = ExperimentSpec(
        kind='baseline_compare', scenario=scenario, train=train_cfg,
        schemes=tuple(args.scheme) if args.scheme else DEFAULT_SCHEMES,
        seed=_channel_seed(args), eval_channels=count)
    result = run_experiment(spec, out_dir=args.out)
    for r in result.records:
        if r.status == 'ok':
            logger.info('%s: %.6f +- %.6f bits/s/Hz', r.scheme, r.mean_rate, r.stderr)
        else:
            logger.info('%s: %s', r.scheme, r.status)
    return 0


def cmd_experiment(args) -> int:
    if args.manifest:
        spec = load_manifest(args.manifest)
    elif args.config:
        spec = ExperimentSpec.from_dict(load_json(args.config), profile=args.profile)
    else:
        raise UsageError('experiment needs --config or --manifest')
    if args.seed is not None:
        spec = spec.replace(seed=args.seed)
    run_experiment(spec, out_dir=args.out)
    return 0


def cmd_quantize(args) -> int:
    scenario, _, count = _sections(args)
    params = load_checkpoint(args.checkpoint)
    fmt = FixedPointFormat(args.word_bits, args.frac_bits)
    qmodel = quantize_model(params, fmt)
    links = sample_links(scenario, np.random.default_rng(_channel_seed(args)), count)
    report = compare_fidelity(params, qmodel, links, scenario.p_max)
    logger.info('%s: float %.6f, quantized %.6f, relative gap %.3g',
                fmt.label, report.mean_float, report.mean_quantized,
                report.relative_gap)
    os.makedirs(args.out, exist_ok=True)
    path = os.path.join(args.out, 'model-%s.ssqm' % fmt.label)
    save_quantized(path, qmodel)
    with open(os.path.join(args.out, 'fidelity-%s.json' % fmt.label), 'w') as f:
        json.dump(report.to_dict(), f, indent=2, sort_keys=True)
        f.write('\n')
    logger.info('Saved quantized model to %s', path)
    return 0


def _is_quantized(path: str) -> bool:
    with open(path, 'rb') as f:
        return f.read(len(MAGIC)) == MAGIC


def cmd_inspect(args) -> int:
    if _is_quantized(args.path):
        qmodel = load_quantized(args.path)
        print(json.dumps(qmodel.config.to_dict(), indent=2, sort_keys=True))
        for name, ints in qmodel.arrays.items():
            print('%-6s %-12s %s, %d saturated' % (
                name, 'x'.join(str(s) for s in ints.shape),
                qmodel.formats[name].label, qmodel.saturation.get(name, 0)))
        return 0
    print(json.dumps(read_checkpoint_header(args.path), indent=2, sort_keys=True))
    params = load_checkpoint(args.path)
    for name, t in params.arrays().items():
        print('%-6s %-12s |max| %.6g' % (
            name, 'x'.join(str(s) for s in t.shape), float(np.max(np.abs(t.data)))))
    return 0


class _Parser(argparse.ArgumentParser):
    """Argument parser whose errors surface as UsageError."""

    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog='starsec')
    parser.add_argument('--verbose', '-v', action='store_true')
    parser.add_argument('--quiet', '-q', action='store_true')
    parser.add_argument('--list', '-l', action='store_true',
                        help='list the available schemes')

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--config', type=str, help='JSON configuration file')
    common.add_argument('--seed', type=int)
    common.add_argument('--out', type=str, default='starsec-out')
    common.add_argument('--profile', choices=['desk', 'paper'], default='desk')

    subparsers = parser.add_subparsers(dest='command', parser_class=_Parser)

    p = subparsers.add_parser('train', parents=[common])
    p.add_argument('--strategy', choices=[s.value for s in Strategy], default='an')
    p.add_argument('--loss', choices=[v.value for v in LossVariant])
    p.set_defaults(func=cmd_train)

    p = subparsers.add_parser('eval', parents=[common])
    p.add_argument('--checkpoint', type=str)
    p.add_argument('--scheme', action='append',
                   help='scheme label; may be given more than once')
    p.set_defaults(func=cmd_eval)

    p = subparsers.add_parser('experiment', parents=[common])
    p.add_argument('--manifest', type=str,
                   help='re-run the experiment recorded in a manifest')
    p.set_defaults(func=cmd_experiment)

    p = subparsers.add_parser('quantize', parents=[common])
    p.add_argument('--checkpoint', type=str, required=True)
    p.add_argument('--word-bits', type=int, default=16)
    p.add_argument('--frac-bits', type=int, default=8)
    p.set_defaults(func=cmd_quantize)

    p = subparsers.add_parser('inspect-checkpoint')
    p.add_argument('path', type=str)
    p.set_defaults(func=cmd_inspect)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as e:
        logging.basicConfig(format='%(message)s', level=logging.INFO)
        logger.error('starsec: %s', e)
        return 2

    level = logging.INFO
    if args.verbose:
        level = logging.DEBUG
    elif args.quiet:
        level = logging.WARNING
    logging.basicConfig(format='%(message)s', level=level)

    load_plugins()

    if args.list:
        for scheme_kls in iter_schemes():
            logger.info('%s - %s', scheme_kls.label, scheme_kls.summary)
        return 0

    if args.command is None:
        parser.print_usage()
        return 2

    try:
        return args.func(args)
    except UsageError as e:
        logger.error('starsec: %s', e)
        return 2
    except (StarsecError, OSError) as e:
        logger.error('starsec: %s', e)
        return 1


if __name__ == '__main__':
    sys.exit(main())
