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

"""Secrecy-rate simulation and optimization for STAR-IRS aided indoor links.

Comparison schemes are registered by plugins living in ``starsec.schemes``:

* install_scheme(scheme_kls)

Register a class that can produce a beamformer and STAR-IRS configuration
for a batch of channel realizations.

"""


__version__ = (0, 1, 0)


import importlib
import logging
import os
from typing import Iterator, List, Optional, Tuple, Type


logger = logging.getLogger('starsec')


class StarsecError(Exception):
    """Base class for all errors raised by starsec."""


class ShapeError(StarsecError):
    """Operand dimensions do not conform."""


class DomainError(StarsecError):
    """An argument lies outside the domain of the operation."""


class UsageError(StarsecError):
    """The API was called in a way it does not support."""


class ConfigError(UsageError):
    """A configuration value is invalid.

    :param field: dotted path of the offending field, e.g. ``scenario.kappa``
    """

    def __init__(self, field: str, message: str):
        super().__init__(f'{field}: {message}')
        self.field = field
        self.message = message


class NumericError(StarsecError):
    """A computation produced a non-finite value."""


class InfeasibleError(StarsecError):
    """The preconditions of a beamformer are not met."""


class DegenerateChannelError(StarsecError):
    """An effective channel vanishes, so no direction can be derived."""


_schemes: List[Type["Scheme"]] = []


def iter_schemes() -> Iterator[Type["Scheme"]]:
    return iter(_schemes)


def iter_plugins():
    from starsec.schemes import __path__ as paths
    for path in paths:
        for entry in sorted(os.scandir(path), key=lambda e: e.name):
            if entry.is_dir() and os.path.exists(entry.path + '/__init__.py'):
                yield entry.name


def load_plugins():
    for name in iter_plugins():
        importlib.import_module('starsec.schemes.' + name)


def find_scheme(label: str) -> Type["Scheme"]:
    """Look up a registered scheme by its label (e.g. ``AN-MRT``)."""
    for scheme_kls in _schemes:
        if scheme_kls.label == label:
            if not scheme_kls.available():
                raise UsageError(f'scheme {label} is not available')
            return scheme_kls
    raise UsageError(
        'unknown scheme %r (known: %s)'
        % (label, ', '.join(s.label for s in _schemes)))


class Scheme(object):
    """Scheme objects produce a beamformer and STAR-IRS coefficients.

    See ``starsec.schemes.classic`` for an example concrete class.
    """

    label: str = ''
    summary: str = ''
    strategy = None
    trainable = False

    @classmethod
    def available(cls) -> bool:
        return True

    @classmethod
    def can_handle(cls, cell) -> bool:
        """Return True if this scheme is well-posed for the experiment cell."""
        return True

    def prepare(self, cell, rng) -> None:
        """Get ready to beamform for the scenario of ``cell``.

        Trainable schemes fit (or load) their model here.
        """

    def beamform(self, links) -> Tuple["Beamformer", "StarCoefficients"]:
        """Produce the transmit beamformer and STAR-IRS configuration.

        :param links: a single (unbatched) ``starsec.channel.Links``
        :return: tuple of (Beamformer, StarCoefficients)
        """
        raise NotImplementedError(self.beamform)

    def beamform_many(self, links_list) -> List[Tuple["Beamformer", "StarCoefficients"]]:
        return [self.beamform(links) for links in links_list]

    def __repr__(self):
        return '<%s %s>' % (type(self).__name__, self.label)


def install_scheme(scheme_kls):
    """Register a new comparison scheme.

    Args:
      scheme_kls: Scheme class
    """
    if any(s.label == scheme_kls.label for s in _schemes):
        logger.debug('Scheme %s already installed', scheme_kls.label)
        return
    _schemes.append(scheme_kls)


def schemes_for(labels: Optional[List[str]] = None) -> List[Type["Scheme"]]:
    """Return scheme classes for ``labels``, or all of them in install order."""
    load_plugins()
    if labels is None:
        return list(_schemes)
    return [find_scheme(label) for label in labels]
