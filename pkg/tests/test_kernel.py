import math
import warnings

import numpy as np
import pytest

from fracspde.errors import AliasingWarning, CertificateError, GridError
from fracspde.kernel import (
    ModelParams,
    build_kernel_table,
    convolve,
    dump_kernel_csv,
    kernel_bounds_certificate,
    kernel_l2_norm,
    kernel_symbol,
    periodic_grid,
)
from fracspde.specfun import mittag_leffler


def gaussian(t, x):
    return np.exp(-x * x / (4 * t)) / np.sqrt(4 * np.pi * t)


@pytest.fixture(scope="module")
def heat_table():
    return build_kernel_table(ModelParams(2, 1), [0.25, 1.0, 2.0, 4.0], periodic_grid(32.0, 8192))


@pytest.fixture(scope="module")
def frac_table():
    return build_kernel_table(ModelParams(2, 0.5), [0.25, 1.0, 4.0], periodic_grid(50.0, 2**14))


class TestModelParams:
    def test_ratio(self):
        assert ModelParams(2, 0.5).ratio == 0.25

    @pytest.mark.parametrize("alpha,beta", [(2, 1.5), (0.4, 0.2), (1, 1), (2, 0), (1, 0.5, )])
    def test_validation(self, alpha, beta):
        if (alpha, beta) == (1, 0.5):
            ModelParams(alpha, beta)
            return
        with pytest.raises(ValueError):
            ModelParams(alpha, beta)


class TestSymbol:
    def test_values(self):
        p = ModelParams(2, 1)
        assert kernel_symbol(p, 1.0, 0.0) == 1.0
        assert kernel_symbol(p, 1.0, 1.0) == pytest.approx(math.exp(-1), rel=1e-12)
        # t^beta |xi|^alpha = 2 * 2 = 4
        assert kernel_symbol(ModelParams(1, 0.5), 4.0, 2.0) == pytest.approx(mittag_leffler(0.5, -4.0), rel=1e-14)

    def test_rejects_nonpositive_time(self):
        with pytest.raises(ValueError):
            kernel_symbol(ModelParams(2, 1), 0.0, 1.0)


class TestTable:
    def test_gaussian_points(self, heat_table):
        tab = heat_table
        j0 = tab.nx // 2
        assert tab.values[tab.time_index(1.0), j0] == pytest.approx((4 * math.pi) ** -0.5, rel=1e-10)
        j1 = j0 + int(round(1.0 / tab.dx))
        assert tab.xs[j1] == pytest.approx(1.0)
        assert tab.values[tab.time_index(2.0), j1] == pytest.approx((8 * math.pi) ** -0.5 * math.exp(-1 / 8), rel=1e-10)

    def test_gaussian_degeneration(self, heat_table):
        for n, t in enumerate(heat_table.times):
            assert np.max(np.abs(heat_table.values[n] - gaussian(t, heat_table.xs))) < 1e-6

    @pytest.mark.parametrize("table", ["heat_table", "frac_table"])
    def test_invariants(self, table, request):
        tab = request.getfixturevalue(table)
        mass = tab.values.sum(axis=1) * tab.dx
        np.testing.assert_allclose(mass, 1.0, atol=1e-4)
        sym = np.abs(tab.values[:, 1:] - tab.values[:, 1:][:, ::-1])
        assert sym.max() < 1e-10
        assert tab.values.min() > -1e-8

    def test_immutable(self, heat_table):
        with pytest.raises(ValueError):
            heat_table.values[0, 0] = 1.0
        with pytest.raises(Exception):
            heat_table.dx = 1.0

    def test_l2_gaussian(self, heat_table):
        assert kernel_l2_norm(heat_table, 1.0) == pytest.approx(1 / (2 * math.sqrt(2 * math.pi)), rel=1e-10)
        assert kernel_l2_norm(heat_table, 4.0) == pytest.approx((32 * math.pi) ** -0.5, rel=1e-10)

    def test_l2_scaling_slope(self, frac_table):
        p = frac_table.params
        ts = frac_table.times
        norms = [kernel_l2_norm(frac_table, t) for t in ts]
        slope = np.polyfit(np.log(ts), np.log(norms), 1)[0]
        assert abs(slope + p.ratio) < 0.02
        for t, v in zip(ts, norms):
            assert v == pytest.approx(p.cstar() * t ** (-p.ratio), rel=0.01)

    def test_l2_stable(self):
        p = ModelParams(1.5, 0.75)
        tab = build_kernel_table(p, [1.0], periodic_grid(100.0, 2**15), tail_tol=1e-2)
        assert kernel_l2_norm(tab, 1.0) == pytest.approx(p.cstar(), rel=0.01)

    def test_unknown_time(self, heat_table):
        with pytest.raises(ValueError):
            kernel_l2_norm(heat_table, 3.0)

    def test_grid_too_narrow(self):
        with pytest.raises(GridError, match="too narrow"):
            build_kernel_table(ModelParams(1.5, 0.75), [1.0], periodic_grid(5.0, 256))

    def test_aliasing_warning(self):
        with warnings.catch_warnings():
            warnings.simplefilter("error", AliasingWarning)
            with pytest.raises(AliasingWarning):
                build_kernel_table(ModelParams(2, 0.5), [1.0], periodic_grid(8.0, 64), tail_tol=1.0)

    @pytest.mark.parametrize("bad", [np.linspace(-1, 1, 5), np.array([0.0, 1.0, 3.0, 4.0]), np.linspace(0, 1, 16)])
    def test_bad_grid(self, bad):
        with pytest.raises(GridError):
            build_kernel_table(ModelParams(2, 1), [1.0], bad)

    def test_bad_times(self):
        with pytest.raises(ValueError):
            build_kernel_table(ModelParams(2, 1), [1.0, 0.5], periodic_grid(10.0, 64))


class TestCertificate:
    def test_polynomial_tails(self):
        tab = build_kernel_table(ModelParams(1, 0.4), [0.5, 1.0, 2.0], periodic_grid(200.0, 2**14), tail_tol=0.05)
        cert = kernel_bounds_certificate(tab)
        c1, c2 = cert
        assert cert.lower_asserted
        assert 0 < c1 <= c2 < 20

    def test_gaussian_lower_not_asserted(self, heat_table):
        cert = kernel_bounds_certificate(heat_table)
        assert not cert.lower_asserted
        assert cert.c1_hat < 1e-3 < cert.c2_hat

    def test_degenerate(self, heat_table):
        with pytest.raises(CertificateError):
            kernel_bounds_certificate(heat_table, floor=10.0)

    def test_upper_violation(self, heat_table):
        with pytest.raises(CertificateError, match="upper envelope"):
            kernel_bounds_certificate(heat_table, max_c2=1e-3)


class TestConvolve:
    def test_constant(self, frac_table):
        out = convolve(frac_table, 1, np.full(frac_table.nx, 3.0))
        np.testing.assert_allclose(out, 3.0, rtol=1e-4)

    def test_spike(self, heat_table):
        f = np.zeros(heat_table.nx)
        f[heat_table.nx // 2] = 1 / heat_table.dx
        np.testing.assert_allclose(convolve(heat_table, 1, f), heat_table.values[1], atol=1e-12)

    def test_semigroup(self, heat_table):
        # G_2 * G_2 = G_4 only at beta = 1
        g2 = heat_table.values[heat_table.time_index(2.0)]
        out = convolve(heat_table, heat_table.time_index(2.0), g2)
        assert np.max(np.abs(out - heat_table.values[heat_table.time_index(4.0)])) < 1e-4

    def test_batch_and_mismatch(self, heat_table):
        f = np.ones((3, heat_table.nx))
        assert convolve(heat_table, 0, f).shape == (3, heat_table.nx)
        with pytest.raises(ValueError):
            convolve(heat_table, 0, np.ones(10))


def test_csv_dump(tmp_path):
    tab = build_kernel_table(ModelParams(2, 1), [1.0], periodic_grid(10.0, 64))
    path = tmp_path / "k.csv"
    dump_kernel_csv(tab, path)
    lines = path.read_text().splitlines()
    assert lines[0] == "t,x,G"
    assert len(lines) == 65
    t, x, g = map(float, lines[33].split(","))
    assert (t, x) == (1.0, 0.0)
    assert g == pytest.approx(tab.values[0, 32], rel=1e-15)
