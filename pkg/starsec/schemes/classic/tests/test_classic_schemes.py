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

from types import SimpleNamespace
import unittest

import numpy as np

from starsec import UsageError
from starsec.channel import ScenarioConfig, sample_links
from starsec.schemes.classic import MmseScheme, MrtScheme, ZfScheme
from starsec.secrecy import Strategy, check_constraints


def cell_for(scenario):
    return SimpleNamespace(scenario=scenario)


class ClassicSchemeTests(unittest.TestCase):

    def setUp(self):
        self.scenario = ScenarioConfig(n_antennas=4, n_elements=6, n_eves=1)
        self.links = sample_links(self.scenario, np.random.default_rng(0), 10)

    def prepared(self, kls, seed=1):
        scheme = kls()
        scheme.prepare(cell_for(self.scenario), np.random.default_rng(seed))
        return scheme

    def test_full_power(self):
        for kls in (MrtScheme, ZfScheme, MmseScheme):
            scheme = self.prepared(kls)
            self.assertIs(Strategy.AN, scheme.strategy)
            for bf, c in scheme.beamform_many(self.links):
                self.assertAlmostEqual(1.0, bf.power / self.scenario.p_max,
                                       delta=1e-9)
                report = check_constraints(bf, c)
                self.assertTrue(report.passed, report.failures())
                np.testing.assert_array_equal(np.full(6, 0.5), c.beta_r)

    def test_same_seed_same_configuration(self):
        a = self.prepared(MrtScheme).beamform(self.links[0])
        b = self.prepared(MrtScheme).beamform(self.links[0])
        np.testing.assert_array_equal(a[1].theta_r, b[1].theta_r)
        np.testing.assert_array_equal(a[0].w, b[0].w)

    def test_unprepared(self):
        self.assertRaises(UsageError, MrtScheme().beamform, self.links[0])

    def test_zero_forcing_needs_spare_antennas(self):
        self.assertTrue(ZfScheme.can_handle(cell_for(self.scenario)))
        crowded = ScenarioConfig(n_antennas=2, n_elements=6, n_eves=2)
        self.assertFalse(ZfScheme.can_handle(cell_for(crowded)))
        self.assertTrue(MrtScheme.can_handle(cell_for(crowded)))

    def test_explicit_construction(self):
        scheme = MmseScheme(p_max=2.0, rng=np.random.default_rng(3))
        bf, _ = scheme.beamform(self.links[0])
        self.assertAlmostEqual(2.0, bf.power)
