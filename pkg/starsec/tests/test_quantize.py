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

import numpy as np
from scipy.special import expit

from starsec import ConfigError, NumericError, UsageError
from starsec.channel import ScenarioConfig, sample_links
from starsec.graphnn import (
    GnnConfig,
    TrainConfig,
    build_graph,
    forward_many,
    init_params,
    train,
    )
from starsec.quantize import (
    FixedPointFormat,
    LookupTable,
    SigmoidTable,
    _mac,
    compare_fidelity,
    dequantize_model,
    load_quantized,
    output_gap,
    quantize_array,
    quantize_model,
    quantize_value,
    quantized_forward,
    quantized_forward_many,
    relu_table,
    requantize,
    round_shift,
    save_quantized,
    )
from starsec.secrecy import Strategy, check_constraints
from starsec.tests import slow_test


SMALL = ScenarioConfig(n_antennas=2, n_elements=4, n_eves=2)
Q16_8 = FixedPointFormat(16, 8)
Q32_24 = FixedPointFormat(32, 24)


def small_model(strategy=Strategy.AN, seed=0):
    config = GnnConfig.for_scenario(SMALL, strategy=strategy, hidden=16)
    return init_params(np.random.default_rng(seed), 2, 4, 16, config)


class FormatTests(unittest.TestCase):

    def test_range(self):
        self.assertEqual(-128.0, Q16_8.min_value)
        self.assertEqual(127.99609375, Q16_8.max_value)
        self.assertEqual(1.0 / 256, Q16_8.resolution)
        self.assertEqual('Q16.8', Q16_8.label)

    def test_invalid(self):
        self.assertRaises(ConfigError, FixedPointFormat, 33, 8)
        self.assertRaises(ConfigError, FixedPointFormat, 16, 0)
        self.assertRaises(ConfigError, FixedPointFormat, 16, 16)

    def test_from_dict(self):
        self.assertEqual(Q32_24, FixedPointFormat.from_dict(Q32_24.to_dict()))
        self.assertRaises(ConfigError, FixedPointFormat.from_dict, {'bits': 8})


class QuantizeValueTests(unittest.TestCase):

    def test_exact(self):
        v = quantize_value(1.25, Q16_8)
        self.assertEqual(320, v.integer)
        self.assertEqual(1.25, v.value)
        self.assertFalse(v.saturated)

    def test_saturates(self):
        v = quantize_value(300.0, Q16_8)
        self.assertEqual(127.99609375, v.value)
        self.assertTrue(v.saturated)
        self.assertEqual(-128.0, quantize_value(-1e6, Q16_8).value)

    def test_rounds_to_zero(self):
        self.assertEqual(0, quantize_value(0.001, Q16_8).integer)

    def test_half_to_even(self):
        res = Q16_8.resolution
        self.assertEqual(0, quantize_value(0.5 * res, Q16_8).integer)
        self.assertEqual(2, quantize_value(1.5 * res, Q16_8).integer)
        self.assertEqual(-2, quantize_value(-2.5 * res, Q16_8).integer)

    def test_error_bound(self):
        x = np.random.default_rng(0).uniform(-100, 100, size=5000)
        q = quantize_array(x, Q16_8)
        self.assertEqual(0, q.saturated)
        self.assertLessEqual(np.max(np.abs(q.dequantize() - x)), 2.0 ** -9)

    def test_saturation_count(self):
        q = quantize_array([1.0, 200.0, -300.0, 5.0], Q16_8)
        self.assertEqual(2, q.saturated)

    def test_non_finite(self):
        self.assertRaises(NumericError, quantize_array, [1.0, np.nan], Q16_8)


class IntegerArithmeticTests(unittest.TestCase):

    def test_round_shift(self):
        x = np.array([5, 6, 7, -5, -7, 3], dtype=np.int64)
        np.testing.assert_array_equal([2, 3, 4, -2, -4, 2], round_shift(x, 1))
        np.testing.assert_array_equal(x, round_shift(x, 0))
        np.testing.assert_array_equal(4 * x, round_shift(x, -2))

    def test_requantize(self):
        acc = np.array([3 << 16, 1 << 40], dtype=np.int64)
        out, count = requantize(acc, 16, Q16_8)
        np.testing.assert_array_equal([3 << 8, Q16_8.int_max], out)
        self.assertEqual(1, count)

    def test_mac_exact_when_wide(self):
        a = np.array([[1 << 40, 1 << 40]], dtype=np.int64)
        b = np.array([[1 << 40], [1 << 40]], dtype=np.int64)
        self.assertEqual(2 ** 81, int(_mac(a, b)[0, 0]))

    def test_mac_small(self):
        a = np.array([[1, 2], [3, 4]], dtype=np.int64)
        np.testing.assert_array_equal([[3], [7]], _mac(a, np.ones((2, 1), dtype=np.int64)))


class LookupTableTests(unittest.TestCase):

    def test_relu_exact(self):
        table = relu_table(Q16_8)
        self.assertEqual(1024, len(table))
        q = np.arange(Q16_8.int_min, Q16_8.int_max + 1, dtype=np.int64)
        np.testing.assert_array_equal(np.maximum(q, 0), table(q))

    def test_relu_exact_wide(self):
        table = relu_table(Q32_24)
        q = np.random.default_rng(1).integers(Q32_24.int_min, Q32_24.int_max,
                                              size=10000)
        np.testing.assert_array_equal(np.maximum(q, 0), table(q))

    def test_sigmoid_accuracy(self):
        x = np.linspace(-20.0, 20.0, 4001)
        for fmt, tol in ((Q32_24, 1e-5), (Q16_8, 2.0 / 256)):
            table = SigmoidTable(fmt, fmt)
            got = table(quantize_array(x, fmt).ints) / float(fmt.scale)
            self.assertLess(np.max(np.abs(got - expit(x))), tol, fmt.label)

    def test_sigmoid_symmetry(self):
        table = SigmoidTable(Q16_8, Q16_8)
        q = np.arange(0, 5000, 7, dtype=np.int64)
        np.testing.assert_array_equal(Q16_8.scale - table(q), table(-q))

    def test_bad_span(self):
        self.assertRaises(UsageError, LookupTable, expit, Q16_8, Q16_8, 0, 3000)


class QuantizeModelTests(unittest.TestCase):

    def test_wide_error_bound(self):
        params = small_model()
        qmodel = quantize_model(params, Q32_24)
        restored = dequantize_model(qmodel)
        for name, t in params.arrays().items():
            err = np.max(np.abs(restored.arrays()[name].data - t.data))
            self.assertLessEqual(err, 2.0 ** -25)
        self.assertEqual(0, qmodel.saturated)

    def test_idempotent(self):
        qmodel = quantize_model(small_model(), Q16_8)
        again = quantize_model(dequantize_model(qmodel), Q16_8)
        for name, ints in qmodel.arrays.items():
            np.testing.assert_array_equal(ints, again.arrays[name])

    def test_saturation_reported(self):
        params = small_model()
        params.F1.data[0, 0] = 1000.0
        params.fcw_b.data[:] = -500.0
        with self.assertLogs('starsec.quantize', 'WARNING'):
            qmodel = quantize_model(params, Q16_8)
        self.assertEqual(1, qmodel.saturation['F1'])
        self.assertEqual(4, qmodel.saturation['fcw_b'])
        self.assertEqual(5, qmodel.saturated)
        again = quantize_model(params, Q16_8)
        self.assertEqual(qmodel.saturation, again.saturation)

    def test_per_array_formats(self):
        qmodel = quantize_model(small_model(), Q16_8, formats={'fcv_b': Q32_24})
        self.assertEqual(Q32_24, qmodel.formats['fcv_b'])
        self.assertEqual(Q16_8, qmodel.formats['F2'])
        self.assertEqual(Q16_8, qmodel.act_format)

    def test_unknown_array(self):
        self.assertRaises(UsageError, quantize_model, small_model(), Q16_8,
                          None, {'F3': Q16_8})


class QuantizedForwardTests(unittest.TestCase):

    def setUp(self):
        self.links = sample_links(SMALL, np.random.default_rng(30), 100)

    def test_matches_float_when_wide(self):
        params = small_model()
        qmodel = quantize_model(params, Q32_24)
        ref = forward_many(params, self.links, SMALL.p_max)
        got = quantized_forward_many(qmodel, self.links, SMALL.p_max)
        for (w0, c0), (w1, c1) in zip(ref, got):
            np.testing.assert_allclose(w0.w, w1.w, rtol=0,
                                       atol=1e-5 * np.sqrt(SMALL.p_max))
            np.testing.assert_allclose(c0.beta_r, c1.beta_r, rtol=0, atol=1e-5)
            np.testing.assert_allclose(np.exp(1j * c0.theta_r),
                                       np.exp(1j * c1.theta_r), rtol=0, atol=5e-5)

    def test_constraints_hold(self):
        for strategy in Strategy:
            qmodel = quantize_model(small_model(strategy), Q16_8)
            for w, c in quantized_forward_many(qmodel, self.links, SMALL.p_max):
                report = check_constraints(w, c)
                self.assertTrue(report.passed, report.failures())

    def test_deterministic(self):
        qmodel = quantize_model(small_model(), Q16_8)
        a = quantized_forward_many(qmodel, self.links[:10], SMALL.p_max)
        b = quantized_forward_many(qmodel, self.links[:10], SMALL.p_max)
        for (w0, c0), (w1, c1) in zip(a, b):
            np.testing.assert_array_equal(w0.w, w1.w)
            np.testing.assert_array_equal(c0.theta_t_an, c1.theta_t_an)

    def test_single(self):
        params = small_model()
        qmodel = quantize_model(params, Q16_8)
        graph = build_graph(self.links[0], params.config)
        w, c = quantized_forward(qmodel, graph, SMALL.p_max, 4, Strategy.AN)
        w_many, _ = quantized_forward_many(qmodel, self.links[:1], SMALL.p_max)[0]
        np.testing.assert_array_equal(w_many.w, w.w)
        self.assertRaises(UsageError, quantized_forward, qmodel, graph,
                          SMALL.p_max, 5)
        self.assertRaises(UsageError, quantized_forward, qmodel, graph,
                          SMALL.p_max, None, Strategy.IRS_ONLY)

    def test_monotone_fidelity(self):
        params = small_model()
        gaps = [output_gap(params, quantize_model(params, fmt), self.links,
                           SMALL.p_max)
                for fmt in (FixedPointFormat(16, 8), FixedPointFormat(24, 12),
                            FixedPointFormat(32, 16))]
        self.assertGreaterEqual(gaps[0], gaps[1])
        self.assertGreaterEqual(gaps[1], gaps[2])


class FidelityTests(unittest.TestCase):

    def setUp(self):
        self.links = sample_links(SMALL, np.random.default_rng(40), 200)
        self.params = small_model()

    def test_exact_copy(self):
        report = compare_fidelity(self.params, self.params.copy(), self.links,
                                  SMALL.p_max)
        self.assertEqual(0.0, report.relative_gap)
        self.assertEqual(0.0, report.max_sample_gap)
        self.assertEqual(200, report.count)

    def test_wide_format(self):
        report = compare_fidelity(self.params, quantize_model(self.params, Q32_24),
                                  self.links, SMALL.p_max)
        self.assertLess(report.relative_gap, 1e-3)

    def test_order_independent(self):
        qmodel = quantize_model(self.params, Q16_8)
        a = compare_fidelity(self.params, qmodel, self.links, SMALL.p_max)
        b = compare_fidelity(self.params, qmodel, self.links[::-1], SMALL.p_max)
        self.assertAlmostEqual(a.mean_float, b.mean_float, places=10)
        self.assertAlmostEqual(a.mean_quantized, b.mean_quantized, places=10)

    def test_config_mismatch(self):
        other = quantize_model(small_model(Strategy.CONV), Q16_8)
        self.assertRaises(UsageError, compare_fidelity, self.params, other,
                          self.links, SMALL.p_max)
        self.assertRaises(UsageError, compare_fidelity, self.params, other, [],
                          SMALL.p_max)

    def test_report_dict(self):
        report = compare_fidelity(self.params, self.params, self.links[:5],
                                  SMALL.p_max)
        self.assertEqual({'mean_float', 'mean_quantized', 'relative_gap',
                          'max_sample_gap', 'count'}, set(report.to_dict()))

    @slow_test()
    def test_trained_desk_model(self):
        scenario = ScenarioConfig.for_profile('desk')
        params, _ = train(TrainConfig(iterations=500, rng_seed=2), scenario)
        links = sample_links(scenario, np.random.default_rng(41), 1000)
        narrow = compare_fidelity(params, quantize_model(params, Q16_8), links,
                                  scenario.p_max)
        wide = compare_fidelity(params, quantize_model(params, Q32_24), links,
                                scenario.p_max)
        self.assertLess(narrow.relative_gap, 0.02)
        self.assertLess(wide.relative_gap, 0.001)


class FileTests(unittest.TestCase):

    def setUp(self):
        self.tmpdir = tempfile.TemporaryDirectory()
        self.addCleanup(self.tmpdir.cleanup)
        self.path = os.path.join(self.tmpdir.name, 'model.ssqm')

    def test_roundtrip(self):
        params = small_model(Strategy.CONV)
        params.F2.data[1, 1] = 1e4
        qmodel = quantize_model(params, Q32_24, act_format=Q16_8)
        save_quantized(self.path, qmodel)
        loaded = load_quantized(self.path)
        self.assertEqual(qmodel.config, loaded.config)
        self.assertEqual(qmodel.act_format, loaded.act_format)
        self.assertEqual(qmodel.formats, loaded.formats)
        self.assertEqual(qmodel.saturation, loaded.saturation)
        for name, ints in qmodel.arrays.items():
            np.testing.assert_array_equal(ints, loaded.arrays[name])

    def test_preamble(self):
        save_quantized(self.path, quantize_model(small_model(), Q16_8))
        with open(self.path, 'rb') as f:
            self.assertEqual(b'SSQM\x01\x00', f.read(6))

    def test_not_quantized(self):
        with open(self.path, 'wb') as f:
            f.write(b'PK\x03\x04' + b'\x00' * 20)
        self.assertRaises(UsageError, load_quantized, self.path)

    def test_truncated(self):
        save_quantized(self.path, quantize_model(small_model(), Q16_8))
        with open(self.path, 'rb') as f:
            data = f.read()
        with open(self.path, 'wb') as f:
            f.write(data[:-8])
        self.assertRaises(UsageError, load_quantized, self.path)
        with open(self.path, 'wb') as f:
            f.write(data[:5])
        self.assertRaises(UsageError, load_quantized, self.path)

    def test_loaded_model_runs(self):
        params = small_model()
        qmodel = quantize_model(params, Q16_8)
        save_quantized(self.path, qmodel)
        links = sample_links(SMALL, np.random.default_rng(0), 3)
        a = quantized_forward_many(qmodel, links, SMALL.p_max)
        b = quantized_forward_many(load_quantized(self.path), links, SMALL.p_max)
        for (w0, _), (w1, _) in zip(a, b):
            np.testing.assert_array_equal(w0.w, w1.w)
