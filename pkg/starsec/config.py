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

"""Helpers shared by the configuration dataclasses.

Configuration files are JSON.  Powers are given in dBm and distances in
meters; conversions to linear units happen once, when a file is loaded.
"""

import hashlib
import json
import math
import os
from typing import Any, Dict, Mapping, Optional

from starsec import ConfigError


THREADS_ENV = 'STARSEC_THREADS'

# Scenario and training values per named profile.  ``paper`` is the
# full-size scenario (N=8, L=80); ``desk`` is small enough for CI.
PROFILES: Dict[str, Dict[str, Dict[str, Any]]] = {
    'desk': {
        'scenario': {'n_antennas': 4, 'n_elements': 16, 'n_eves': 2},
        'train': {'iterations': 500},
        'eval_channels': {'count': 1000},
    },
    'paper': {
        'scenario': {'n_antennas': 8, 'n_elements': 80, 'n_eves': 2},
        'train': {'iterations': 500},
        'eval_channels': {'count': 1000},
    },
}


def dbm_to_watts(dbm: float) -> float:
    return 10.0 ** ((dbm - 30.0) / 10.0)


def watts_to_dbm(watts: float) -> float:
    return 10.0 * math.log10(watts) + 30.0


def db_to_linear(db: float) -> float:
    return 10.0 ** (db / 10.0)


def load_json(path: str) -> Dict[str, Any]:
    try:
        with open(path, 'r') as f:
            return json.load(f)
    except json.JSONDecodeError as e:
        raise ConfigError(os.path.basename(path), 'invalid JSON: %s' % e)


def canonical_json(obj: Any) -> str:
    """Serialize ``obj`` deterministically (sorted keys, no whitespace)."""
    return json.dumps(obj, sort_keys=True, separators=(',', ':'))


def config_hash(obj: Any) -> str:
    return hashlib.sha256(canonical_json(obj).encode('utf-8')).hexdigest()


def require(condition: bool, field: str, message: str) -> None:
    if not condition:
        raise ConfigError(field, message)


def get_number(d: Mapping[str, Any], key: str, prefix: str,
               default: Optional[float] = None, integer: bool = False):
    path = f'{prefix}.{key}' if prefix else key
    if key not in d:
        if default is None:
            raise ConfigError(path, 'missing')
        return default
    value = d[key]
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(path, 'expected a number, got %r' % (value,))
    if integer:
        if int(value) != value:
            raise ConfigError(path, 'expected an integer, got %r' % (value,))
        return int(value)
    return float(value)


def reject_unknown(d: Mapping[str, Any], known, prefix: str) -> None:
    for key in d:
        if key not in known:
            path = f'{prefix}.{key}' if prefix else key
            raise ConfigError(path, 'unknown field')


def profile_overrides(profile: str, section: str) -> Dict[str, Any]:
    try:
        return dict(PROFILES[profile][section])
    except KeyError:
        raise ConfigError('profile', 'unknown profile %r (choose from %s)'
                          % (profile, ', '.join(sorted(PROFILES))))


def thread_count() -> int:
    value = os.environ.get(THREADS_ENV, '1')
    try:
        count = int(value)
    except ValueError:
        raise ConfigError(THREADS_ENV, 'expected an integer, got %r' % value)
    return max(count, 1)
