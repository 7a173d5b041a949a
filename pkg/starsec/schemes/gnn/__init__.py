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

__doc__ = """GNN schemes: AN-GNN, CONV-GNN and IRS-GNN.

Each scheme trains (or reuses a cached) model for the scenario of the
experiment cell and then beamforms with a single batched forward pass.
"""

from starsec import Scheme, UsageError, install_scheme
from starsec.graphnn import ModelParams, build_graph, forward, forward_many
from starsec.secrecy import Strategy


class GnnScheme(Scheme):
    """Beamforming with a trained graph neural network."""

    trainable = True

    def __init__(self, params: ModelParams = None, p_max: float = None):
        self.params = params
        self.p_max = p_max
        if params is not None and params.config.strategy is not self.strategy:
            raise UsageError('%s needs a %s model, got %s'
                             % (self.label, self.strategy.value,
                                params.config.strategy.value))

    def prepare(self, cell, rng):
        self.params = cell.model(self.strategy)
        self.p_max = cell.scenario.p_max

    def _require_model(self):
        if self.params is None:
            raise UsageError('%s has no model; call prepare() first' % self.label)

    def beamform(self, links):
        self._require_model()
        return forward(self.params, build_graph(links, self.params.config),
                       self.p_max)

    def beamform_many(self, links_list):
        self._require_model()
        return forward_many(self.params, links_list, self.p_max)


class AnGnnScheme(GnnScheme):

    label = 'AN-GNN'
    summary = 'GNN beamforming with artificial noise from the STAR-IRS'
    strategy = Strategy.AN


class ConvGnnScheme(GnnScheme):

    label = 'CONV-GNN'
    summary = 'GNN beamforming, STAR-IRS transmits the information signal'
    strategy = Strategy.CONV


class IrsGnnScheme(GnnScheme):

    label = 'IRS-GNN'
    summary = 'GNN beamforming with a reflect-only IRS'
    strategy = Strategy.IRS_ONLY


def scheme_for_strategy(strategy) -> type:
    strategy = Strategy.parse(strategy)
    for kls in (AnGnnScheme, ConvGnnScheme, IrsGnnScheme):
        if kls.strategy is strategy:
            return kls
    raise UsageError('no GNN scheme for strategy %r' % (strategy,))


install_scheme(AnGnnScheme)
install_scheme(ConvGnnScheme)
install_scheme(IrsGnnScheme)
