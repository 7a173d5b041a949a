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

import importlib
import os
import unittest

from starsec import iter_plugins


SLOW_TESTS_ENV = 'STARSEC_SLOW_TESTS'

names = [
    'config',
    'tensor',
    'channel',
    'secrecy',
    'graphnn',
    'baselines',
    'quantize',
    'experiment',
    'registry',
    'main',
]


def slow_tests_enabled() -> bool:
    return os.environ.get(SLOW_TESTS_ENV, '') == '1'


def slow_test(reason='set %s=1 to run' % SLOW_TESTS_ENV):
    return unittest.skipUnless(slow_tests_enabled(), reason)


def load_tests(loader, basic_tests, pattern):
    basic_tests.addTest(loader.loadTestsFromNames(
        [__name__ + '.test_' + name for name in names]))
    return basic_tests


def test_suite():
    loader = unittest.TestLoader()
    suite = unittest.TestSuite()
    load_tests(loader, suite, None)
    for plugin_name in iter_plugins():
        m = importlib.import_module(
            'starsec.schemes.' + plugin_name + '.tests')
        m.load_tests(loader, suite, None)
    return suite
