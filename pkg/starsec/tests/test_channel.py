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

import unittest

import numpy as np

from starsec import ConfigError, DomainError, ShapeError
from starsec.channel import (
    ChannelRealization,
    CsiErrorConfig,
    Links,
    ScenarioConfig,
    cascaded,
    cascaded_matrix,
    channel_set_digest,
    path_loss_gain,
    perturb_csi,
    sample_channels,
    sample_links,
    sample_rician,
    sample_scenario,
    stack_links,
    steering_vector,
    )


def small_config(**kwargs):
    d = dict(n_antennas=2, n_elements=3, n_eves=2)
    d.update(kwargs)
    return ScenarioConfig(**d)


class ScenarioConfigTests(unittest.TestCase):

    def test_derived_powers(self):
        cfg = ScenarioConfig()
        self.assertAlmostEqual(10 ** -1.2, cfg.p_max, places=15)
        self.assertAlmostEqual(1e-12, cfg.sigma2_b, places=25)
        self.assertEqual((cfg.sigma2_b, cfg.sigma2_b), cfg.sigma2_k)

    def test_per_eve_noise(self):
        cfg = small_config(eve_noise_dbm=(-90.0, -80.0))
        self.assertAlmostEqual(1e-11, cfg.sigma2_k[1], places=24)

    def test_eve_noise_length(self):
        with self.assertRaises(ConfigError) as cm:
            small_config(eve_noise_dbm=(-90.0,))
        self.assertEqual('scenario.eve_noise_dbm', cm.exception.field)

    def test_invalid_range(self):
        try:
            small_config(d_ae_range=(8.0, 4.0))
        except ConfigError as e:
            self.assertEqual('scenario.d_ae_range', e.field)
        else:
            self.fail('ConfigError not raised')

    def test_from_dict_unknown_field(self):
        try:
            ScenarioConfig.from_dict({'n_antennas': 4, 'bogus': 1})
        except ConfigError as e:
            self.assertEqual('scenario.bogus', e.field)
        else:
            self.fail('ConfigError not raised')

    def test_from_dict_wrong_type(self):
        try:
            ScenarioConfig.from_dict({'n_antennas': 'four'})
        except ConfigError as e:
            self.assertEqual('scenario.n_antennas', e.field)
        else:
            self.fail('ConfigError not raised')

    def test_from_dict_non_integer(self):
        self.assertRaises(ConfigError, ScenarioConfig.from_dict,
                          {'n_elements': 2.5})

    def test_dict_roundtrip(self):
        cfg = small_config(d_se_range=(5.0, 6.0), eve_noise_dbm=(-90.0, -85.0))
        self.assertEqual(cfg, ScenarioConfig.from_dict(cfg.to_dict()))

    def test_profiles(self):
        self.assertEqual(4, ScenarioConfig.for_profile('desk').n_antennas)
        paper = ScenarioConfig.for_profile('paper')
        self.assertEqual((8, 80, 2),
                         (paper.n_antennas, paper.n_elements, paper.n_eves))
        self.assertRaises(ConfigError, ScenarioConfig.for_profile, 'huge')

    def test_reference_gains(self):
        cfg = ScenarioConfig(d_ab=1.0, d_sb=1.0, d_as=1.0)
        direct, casc = cfg.reference_gains()
        self.assertAlmostEqual(1e-3, direct)
        self.assertAlmostEqual(1e-6, casc)


class CsiErrorConfigTests(unittest.TestCase):

    def test_negative(self):
        self.assertRaises(ConfigError, CsiErrorConfig, -1.0, 0.0)

    def test_perfect(self):
        self.assertTrue(CsiErrorConfig().perfect)
        self.assertFalse(CsiErrorConfig.equal(0.01).perfect)

    def test_relative(self):
        cfg = ScenarioConfig(d_ab=1.0, d_sb=1.0, d_as=1.0)
        err = CsiErrorConfig.relative(0.1, cfg)
        self.assertAlmostEqual(1e-4, err.sigma2_h)
        self.assertAlmostEqual(1e-7, err.sigma2_d)

    def test_from_dict(self):
        err = CsiErrorConfig.from_dict({'sigma2_h': 0.5})
        self.assertEqual(CsiErrorConfig(0.5, 0.0), err)
        self.assertRaises(ConfigError, CsiErrorConfig.from_dict, {'sigma': 1})


class PathLossTests(unittest.TestCase):

    def test_reference_distance(self):
        self.assertAlmostEqual(1e-3, path_loss_gain(1.0, ScenarioConfig()))

    def test_ten_meters(self):
        self.assertAlmostEqual(
            3.1623e-6, path_loss_gain(10.0, ScenarioConfig()), delta=1e-10)

    def test_eight_meters(self):
        gain = path_loss_gain(8.0, ScenarioConfig())
        self.assertAlmostEqual(-52.577, 10 * np.log10(gain), places=3)

    def test_non_positive_distance(self):
        self.assertRaises(DomainError, path_loss_gain, 0.0, ScenarioConfig())


class SamplingTests(unittest.TestCase):

    def test_eve_distances_in_range(self):
        cfg = small_config(n_eves=50)
        s = sample_scenario(cfg, np.random.default_rng(0))
        self.assertEqual(50, len(s.d_ae))
        for d in s.d_ae + s.d_se:
            self.assertTrue(4.0 <= d <= 8.0)
        self.assertEqual(8.0, s.d_ab)

    def test_degenerate_range(self):
        cfg = small_config(d_ae_range=(5.0, 5.0))
        s = sample_scenario(cfg, np.random.default_rng(0))
        self.assertEqual((5.0, 5.0), s.d_ae)

    def test_uniform_mean(self):
        cfg = small_config(n_eves=10000)
        s = sample_scenario(cfg, np.random.default_rng(1))
        self.assertAlmostEqual(6.0, np.mean(s.d_ae), delta=0.1)

    def test_steering_vector(self):
        np.testing.assert_allclose(np.ones(4), steering_vector(4, 0.0))
        a = steering_vector(6, 0.7)
        np.testing.assert_allclose(np.ones(6), np.abs(a))

    def test_rayleigh_variance(self):
        h = sample_rician(100, 100, 0.0, 2.0, np.random.default_rng(2))
        self.assertEqual((100, 100), h.shape)
        self.assertAlmostEqual(2.0, np.mean(np.abs(h) ** 2), delta=0.1)

    def test_line_of_sight_limit(self):
        h = sample_rician(4, 3, 1e9, 4.0, np.random.default_rng(3))
        np.testing.assert_allclose(2.0 * np.ones((4, 3)), np.abs(h), rtol=1e-3)

    def test_unit_normalization(self):
        h = sample_rician(100, 100, 0.3, 1.0, np.random.default_rng(4))
        self.assertAlmostEqual(1.0, np.mean(np.abs(h) ** 2), delta=0.05)

    def test_rician_domain(self):
        rng = np.random.default_rng(0)
        self.assertRaises(DomainError, sample_rician, 2, 2, -0.1, 1.0, rng)
        self.assertRaises(DomainError, sample_rician, 2, 2, 0.3, -1.0, rng)

    def test_channel_shapes(self):
        cfg = small_config()
        ch = sample_channels(cfg, sample_scenario(cfg, np.random.default_rng(0)),
                             np.random.default_rng(1))
        self.assertEqual((2,), ch.h_b.shape)
        self.assertEqual((2, 2), ch.h_k.shape)
        self.assertEqual((3,), ch.f_b.shape)
        self.assertEqual((2, 3), ch.f_k.shape)
        self.assertEqual((3, 2), ch.G.shape)
        links = ch.links()
        self.assertEqual((3, 2), links.d_b.shape)
        self.assertEqual((2, 3, 2), links.d_k.shape)
        self.assertEqual((2, 3, 2), (links.n_antennas, links.n_elements,
                                     links.n_eves))

    def test_same_seed_identical(self):
        cfg = small_config()
        a = sample_links(cfg, np.random.default_rng(7), 3)
        b = sample_links(cfg, np.random.default_rng(7), 3)
        for x, y in zip(a, b):
            np.testing.assert_array_equal(x.h_b, y.h_b)
            np.testing.assert_array_equal(x.d_k, y.d_k)
        self.assertEqual(channel_set_digest(a), channel_set_digest(b))

    def test_digest_changes(self):
        cfg = small_config()
        a = sample_links(cfg, np.random.default_rng(7), 2)
        b = sample_links(cfg, np.random.default_rng(8), 2)
        self.assertNotEqual(channel_set_digest(a), channel_set_digest(b))

    def test_realization_shape_check(self):
        self.assertRaises(
            ShapeError, ChannelRealization,
            h_b=np.ones(2), h_k=np.ones((1, 2)), f_b=np.ones(3),
            f_k=np.ones((1, 3)), G=np.ones((2, 2)), sigma2_b=1.0,
            sigma2_k=np.ones(1))


class CascadedTests(unittest.TestCase):

    def test_ones_identity(self):
        np.testing.assert_array_equal(
            np.eye(3).reshape(-1), cascaded(np.ones(3), np.eye(3)))

    def test_conjugate(self):
        np.testing.assert_array_equal(
            [-1j], cascaded(np.array([1j]), np.array([[1.0 + 0j]])))

    def test_index_oracle(self):
        rng = np.random.default_rng(5)
        f = rng.normal(size=3) + 1j * rng.normal(size=3)
        G = rng.normal(size=(3, 2)) + 1j * rng.normal(size=(3, 2))
        d = cascaded(f, G)
        for l_idx in range(3):
            for n in range(2):
                self.assertEqual(np.conj(f[l_idx]) * G[l_idx, n], d[l_idx * 2 + n])

    def test_column_vector_accepted(self):
        f = np.array([[1.0], [2.0]])
        np.testing.assert_array_equal(
            cascaded_matrix(f[:, 0], np.eye(2)), cascaded_matrix(f, np.eye(2)))

    def test_shape_error(self):
        self.assertRaises(ShapeError, cascaded, np.ones(3), np.ones((2, 2)))


def _links(h_k, d_k):
    n = h_k.shape[-1]
    return Links(h_b=np.ones(n, dtype=complex), d_b=np.ones(d_k.shape[1:], dtype=complex),
                 h_k=h_k, d_k=d_k, sigma2_b=1.0,
                 sigma2_k=np.ones(h_k.shape[0]))


class LinksTests(unittest.TestCase):

    def test_stack_and_index(self):
        cfg = small_config()
        links = sample_links(cfg, np.random.default_rng(0), 3)
        batch = stack_links(links)
        self.assertTrue(batch.batched)
        self.assertEqual(3, len(batch))
        np.testing.assert_array_equal(links[1].d_k, batch[1].d_k)
        self.assertEqual(links[1].sigma2_b, batch[1].sigma2_b)

    def test_stack_empty(self):
        self.assertRaises(ShapeError, stack_links, [])

    def test_stack_mixed(self):
        a = sample_links(small_config(), np.random.default_rng(0), 1)
        b = sample_links(small_config(n_antennas=3), np.random.default_rng(0), 1)
        self.assertRaises(ShapeError, stack_links, a + b)

    def test_unbatched_len(self):
        links = sample_links(small_config(), np.random.default_rng(0), 1)[0]
        self.assertRaises(TypeError, len, links)

    def test_permute_eves(self):
        links = sample_links(small_config(), np.random.default_rng(0), 1)[0]
        swapped = links.permute_eves([1, 0])
        np.testing.assert_array_equal(links.h_k[0], swapped.h_k[1])
        np.testing.assert_array_equal(links.d_k[1], swapped.d_k[0])


class PerturbCsiTests(unittest.TestCase):

    def test_zero_variance(self):
        links = sample_links(small_config(), np.random.default_rng(0), 1)[0]
        est = perturb_csi(links, CsiErrorConfig(), np.random.default_rng(1))
        np.testing.assert_array_equal(links.h_k, est.h_k_est)
        np.testing.assert_array_equal(links.d_k, est.d_k_est)

    def test_error_variance(self):
        links = _links(np.zeros((1, 10000), dtype=complex),
                       np.zeros((1, 1, 10000), dtype=complex))
        est = perturb_csi(links, CsiErrorConfig(0.01, 0.02),
                          np.random.default_rng(2))
        self.assertAlmostEqual(0.01, np.mean(np.abs(est.h_k_err) ** 2), delta=0.001)
        self.assertAlmostEqual(0.02, np.mean(np.abs(est.d_k_err) ** 2), delta=0.002)

    def test_estimate_plus_error_is_truth(self):
        links = sample_links(small_config(), np.random.default_rng(0), 1)[0]
        est = perturb_csi(links, CsiErrorConfig.equal(1e-6),
                          np.random.default_rng(3))
        np.testing.assert_allclose(links.h_k, est.h_k_est + est.h_k_err,
                                   rtol=0, atol=1e-15)
        np.testing.assert_allclose(links.d_k, est.d_k_est + est.d_k_err,
                                   rtol=0, atol=1e-15)

    def test_bob_untouched(self):
        links = sample_links(small_config(), np.random.default_rng(0), 1)[0]
        est = perturb_csi(links, CsiErrorConfig.equal(1.0),
                          np.random.default_rng(4))
        self.assertIs(links.h_b, est.links.h_b)
        self.assertIs(links.d_b, est.links.d_b)
        np.testing.assert_array_equal(est.h_k_est, est.links.h_k)
