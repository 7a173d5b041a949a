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

import os
import tempfile
import unittest

from starsec import ConfigError
from starsec.config import (
    THREADS_ENV,
    config_hash,
    db_to_linear,
    dbm_to_watts,
    get_number,
    load_json,
    profile_overrides,
    reject_unknown,
    thread_count,
    watts_to_dbm,
    )


class UnitTests(unittest.TestCase):

    def test_dbm(self):
        self.assertAlmostEqual(1e-3, dbm_to_watts(0.0))
        self.assertAlmostEqual(1.0, dbm_to_watts(-90.0) / 1e-12)
        self.assertAlmostEqual(18.0, watts_to_dbm(dbm_to_watts(18.0)))
        self.assertAlmostEqual(30.0, watts_to_dbm(1.0))

    def test_db(self):
        self.assertAlmostEqual(100.0, db_to_linear(20.0))


class ParsingTests(unittest.TestCase):

    def test_get_number(self):
        d = {'a': 3, 'b': 2.5, 'c': True, 'd': 'x'}
        self.assertEqual(3.0, get_number(d, 'a', 'p'))
        self.assertEqual(3, get_number(d, 'a', 'p', integer=True))
        self.assertEqual(7, get_number(d, 'z', 'p', default=7))
        for key, kwargs in (('b', {'integer': True}), ('c', {}), ('d', {}),
                            ('z', {})):
            with self.assertRaises(ConfigError) as cm:
                get_number(d, key, 'p', **kwargs)
            self.assertEqual('p.' + key, cm.exception.field)

    def test_reject_unknown(self):
        reject_unknown({'a': 1}, ('a', 'b'), 'top')
        with self.assertRaises(ConfigError) as cm:
            reject_unknown({'c': 1}, ('a', 'b'), 'top')
        self.assertEqual('top.c', cm.exception.field)

    def test_hash_ignores_key_order(self):
        self.assertEqual(config_hash({'a': 1, 'b': [1, 2]}),
                         config_hash({'b': [1, 2], 'a': 1}))
        self.assertNotEqual(config_hash({'a': 1}), config_hash({'a': 2}))

    def test_load_json(self):
        with tempfile.TemporaryDirectory() as d:
            path = os.path.join(d, 'broken.json')
            with open(path, 'w') as f:
                f.write('{"a": ')
            with self.assertRaises(ConfigError) as cm:
                load_json(path)
            self.assertEqual('broken.json', cm.exception.field)


class ProfileTests(unittest.TestCase):

    def test_profiles(self):
        self.assertEqual(16, profile_overrides('desk', 'scenario')['n_elements'])
        self.assertEqual(80, profile_overrides('paper', 'scenario')['n_elements'])
        self.assertEqual(1000, profile_overrides('desk', 'eval_channels')['count'])

    def test_copy(self):
        profile_overrides('desk', 'scenario')['n_elements'] = 3
        self.assertEqual(16, profile_overrides('desk', 'scenario')['n_elements'])

    def test_unknown(self):
        with self.assertRaises(ConfigError) as cm:
            profile_overrides('huge', 'scenario')
        self.assertEqual('profile', cm.exception.field)


class ThreadCountTests(unittest.TestCase):

    def setUp(self):
        saved = os.environ.pop(THREADS_ENV, None)
        if saved is not None:
            self.addCleanup(os.environ.__setitem__, THREADS_ENV, saved)
        self.addCleanup(os.environ.pop, THREADS_ENV, None)

    def test_default(self):
        self.assertEqual(1, thread_count())

    def test_values(self):
        os.environ[THREADS_ENV] = '4'
        self.assertEqual(4, thread_count())
        os.environ[THREADS_ENV] = '0'
        self.assertEqual(1, thread_count())
        os.environ[THREADS_ENV] = 'many'
        self.assertRaises(ConfigError, thread_count)
