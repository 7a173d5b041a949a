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

__doc__ = """Classical beamformers paired with a random STAR-IRS configuration.

AN-MRT, AN-ZF and AN-MMSE draw an even-split STAR-IRS configuration with
uniform phases for every channel and evaluate under the AN strategy.
"""

import numpy as np

from starsec import Scheme, UsageError, install_scheme
from starsec.baselines import BaselineKind, beamformer, random_star_coeffs
from starsec.secrecy import Strategy


class ClassicScheme(Scheme):

    kind: BaselineKind = None
    strategy = Strategy.AN

    def __init__(self, p_max: float = None, rng: np.random.Generator = None):
        self.p_max = p_max
        self.rng = rng

    def prepare(self, cell, rng):
        self.p_max = cell.scenario.p_max
        self.rng = rng

    def beamform(self, links):
        if self.rng is None or self.p_max is None:
            raise UsageError('%s is not prepared' % self.label)
        c = random_star_coeffs(links.n_elements, self.rng)
        return beamformer(self.kind, links, c, self.p_max), c


class MrtScheme(ClassicScheme):

    label = 'AN-MRT'
    summary = 'maximum ratio transmission toward Bob'
    kind = BaselineKind.MRT


class ZfScheme(ClassicScheme):

    label = 'AN-ZF'
    summary = 'zero forcing of the Eve direct channels'
    kind = BaselineKind.ZF

    @classmethod
    def can_handle(cls, cell):
        return cell.scenario.n_antennas > cell.scenario.n_eves


class MmseScheme(ClassicScheme):

    label = 'AN-MMSE'
    summary = 'regularized leakage suppression'
    kind = BaselineKind.MMSE


install_scheme(MrtScheme)
install_scheme(ZfScheme)
install_scheme(MmseScheme)
