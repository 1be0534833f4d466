import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from mixfujita import (
    Field,
    GridTooSmallError,
    OperatorParams,
    SpectralGrid,
    apply_generator,
    apply_semigroup,
    bump,
    fractional_kernel,
    gaussian,
    gaussian_kernel,
    kernel_peak_constant,
    kernel_profile,
    mixed_kernel,
    symbol,
)
from mixfujita.operators import field_to_csv, periodic_convolution

from conftest import cosine

params_st = st.builds(
    OperatorParams,
    a=st.floats(0.0, 5.0),
    b=st.floats(0.01, 5.0),
    s=st.floats(0.05, 0.95),
)


def poisson_periodized(x, t, L):
    """Exact periodization of t/(pi(t^2 + x^2)) over period 2L."""
    c = np.pi / L
    return np.sinh(c * t) / (2 * L * (np.cosh(c * t) - np.cos(c * x)))


class TestParams:
    @pytest.mark.parametrize("a,b,s", [(-1, 1, 0.5), (1, -1, 0.5), (0, 0, 0.5), (1, 1, 0.0),
                                       (1, 1, 1.0), (1, 1, float("nan"))])
    def test_invalid(self, a, b, s):
        with pytest.raises(ValueError):
            OperatorParams(a, b, s)

    def test_fujita(self):
        assert OperatorParams(1, 1, 0.5).fujita_exponent(1) == 2.0
        assert OperatorParams(1, 1, 0.75).fujita_exponent(2) == 1.75


class TestGrid:
    @pytest.mark.parametrize("n", [4, 12, 100])
    def test_power_of_two(self, n):
        with pytest.raises(ValueError):
            SpectralGrid(1, 1.0, n)

    def test_dim(self):
        with pytest.raises(ValueError):
            SpectralGrid(3, 1.0, 16)

    def test_lattice(self):
        g = SpectralGrid(1, 2.0, 16)
        assert g.spacing == 0.25
        k = np.sort(g.freq_axis)
        np.testing.assert_allclose(k, np.pi * np.arange(-8, 8) / 2.0)
        # symmetric except the Nyquist mode
        np.testing.assert_allclose(k[1:], -k[1:][::-1])

    def test_nonfinite_field(self, grid64):
        with pytest.raises(ValueError):
            grid64.field(np.full(64, np.nan))


class TestSymbol:
    @pytest.mark.parametrize("a,b,s,xi,expected", [(1, 0, 0.5, 2, 4), (0, 1, 0.5, 4, 4),
                                                   (2, 3, 0.75, 1, 5)])
    def test_examples(self, a, b, s, xi, expected):
        assert symbol(OperatorParams(a, b, s), xi) == pytest.approx(expected, rel=1e-15)

    @given(params_st, st.floats(0, 1e3))
    def test_additivity(self, p, xi):
        whole = symbol(p, xi)
        parts = symbol(OperatorParams(p.a, 0, p.s), xi) if p.a > 0 else 0.0
        parts += symbol(OperatorParams(0, p.b, p.s), xi)
        assert whole == pytest.approx(parts, rel=1e-14, abs=1e-300)

    @given(params_st, st.floats(1e-6, 1e3))
    def test_positive_off_origin(self, p, xi):
        assert symbol(p, 0.0) == 0.0
        assert symbol(p, xi) > 0


class TestSemigroup:
    def test_identity_at_zero(self, grid64, params):
        u = bump(grid64, 3.0)
        np.testing.assert_allclose(apply_semigroup(params, u, 0.0).values, u.values, atol=1e-12)

    def test_constant(self, grid64, params):
        u = grid64.field(np.full(64, 2.5))
        np.testing.assert_allclose(apply_semigroup(params, u, 7.0).values, 2.5, rtol=1e-13)

    @pytest.mark.parametrize("kidx", [1, 5, 17])
    def test_cosine_mode(self, grid64, kidx):
        p = OperatorParams(0.7, 1.3, 0.3)
        u, k = cosine(grid64, kidx)
        t = 0.4
        expected = np.exp(-(0.7 * k**2 + 1.3 * k**0.6) * t) * u.values
        np.testing.assert_allclose(apply_semigroup(p, u, t).values, expected, atol=1e-13)

    @given(params_st, st.floats(0.0, 3.0), st.floats(0.0, 3.0))
    def test_semigroup_property(self, p, t1, t2):
        g = SpectralGrid(1, 10.0, 64)
        u = bump(g, 3.0) + gaussian(g, 0.7, 0.5)
        lhs = apply_semigroup(p, u, t1 + t2)
        rhs = apply_semigroup(p, apply_semigroup(p, u, t1), t2)
        assert np.abs(lhs.values - rhs.values).max() < 1e-10

    @given(params_st, st.floats(0.01, 5.0))
    def test_mass_and_max(self, p, t):
        g = SpectralGrid(1, 10.0, 64)
        u = bump(g, 3.0)
        v = apply_semigroup(p, u, t)
        assert v.mass == pytest.approx(u.mass, rel=1e-12)
        assert v.sup_norm <= u.sup_norm * (1 + 1e-12)

    def test_rejects_nonfinite(self, grid64, params):
        bad = Field.__new__(Field)
        object.__setattr__(bad, "grid", grid64)
        object.__setattr__(bad, "values", np.full(64, np.inf))
        with pytest.raises(ValueError):
            apply_semigroup(params, bad, 1.0)

    def test_rejects_negative_time(self, grid64, params):
        with pytest.raises(ValueError):
            apply_semigroup(params, bump(grid64), -1.0)


class TestGenerator:
    def test_constant_to_zero(self, grid64, params):
        u = grid64.field(np.full(64, 3.0))
        assert np.abs(apply_generator(params, u).values).max() < 1e-13

    def test_laplacian_cosine(self, grid64):
        u, k = cosine(grid64, 4)
        out = apply_generator(OperatorParams(1, 0, 0.5), u)
        np.testing.assert_allclose(out.values, -k**2 * u.values, atol=1e-12)

    @pytest.mark.parametrize("a,b,s", [(1, 1, 0.5), (0.2, 2, 0.8), (0, 1, 0.25)])
    def test_general_cosine(self, grid64, a, b, s):
        u, k = cosine(grid64, 6)
        p = OperatorParams(a, b, s)
        np.testing.assert_allclose(apply_generator(p, u).values, -symbol(p, k) * u.values,
                                   atol=1e-12)

    @given(params_st)
    def test_zero_mass(self, p):
        g = SpectralGrid(1, 10.0, 64)
        assert abs(apply_generator(p, bump(g, 3.0)).mass) < 1e-10

    def test_first_order_consistency(self, grid64, params):
        # band-limited field: a few low modes
        x = grid64.coords[0]
        k = np.pi / grid64.half_width
        u = grid64.field(1 + np.cos(k * x) + 0.5 * np.sin(3 * k * x))
        Lu = apply_generator(params, u).values
        errs = []
        for d in (1e-2, 5e-3, 2.5e-3):
            q = (apply_semigroup(params, u, d).values - u.values) / d
            errs.append(np.abs(q - Lu).max())
        ratios = np.array(errs[:-1]) / np.array(errs[1:])
        np.testing.assert_allclose(ratios, 2.0, rtol=0.02)


class TestKernels:
    def test_gaussian_peak(self):
        g = SpectralGrid(1, 40.0, 1024)
        for a, t in [(1.0, 1.0), (0.5, 3.0)]:
            k = mixed_kernel(OperatorParams(a, 0, 0.5), g, t)
            assert k.values[512] == pytest.approx((4 * np.pi * a * t) ** -0.5, rel=1e-12)
            np.testing.assert_allclose(k.values, gaussian_kernel(a, g, t).values, atol=1e-14)

    def test_gaussian_peak_2d(self):
        g = SpectralGrid(2, 20.0, 128)
        k = mixed_kernel(OperatorParams(1, 0, 0.5), g, 2.0)
        assert k.values[64, 64] == pytest.approx(1 / (8 * np.pi), rel=1e-10)

    @pytest.mark.parametrize("a,b,s", [(1, 1, 0.5), (0.1, 2, 0.3), (2, 0.5, 0.9)])
    def test_mass_one(self, a, b, s):
        g = SpectralGrid(1, 2000.0, 2**14)
        k = mixed_kernel(OperatorParams(a, b, s), g, 1.0)
        assert abs(k.mass - 1.0) < 1e-8

    def test_poisson_kernel(self):
        # periodized closed form is exact on the torus, so the tolerance is tight
        g = SpectralGrid(1, 256.0, 8192)
        for t in (1.0, 2.0):  # exp(-t pi/h) negligible, so no aliasing
            k = fractional_kernel(0.5, 1.0, g, t)
            ref = poisson_periodized(g.coords[0], t, g.half_width)
            assert np.abs(k.values - ref).max() < 1e-12

    def test_positive_and_monotone(self):
        g = SpectralGrid(1, 512.0, 2**13)
        k = mixed_kernel(OperatorParams(1, 1, 0.5), g, 1.0)
        assert (k.values > 0).all()
        half = k.values[g.n // 2:]
        assert (np.diff(half) <= 1e-15).all()

    def test_factorization(self):
        g = SpectralGrid(1, 256.0, 4096)
        p = OperatorParams(1.0, 1.0, 0.5)
        k = mixed_kernel(p, g, 1.0)
        kl = gaussian_kernel(1.0, g, 1.0)
        ks = fractional_kernel(0.5, 1.0, g, 1.0)
        conv = periodic_convolution(kl, ks)
        assert np.abs(conv.values - k.values).max() < 1e-8

    def test_grid_too_small(self):
        with pytest.raises(GridTooSmallError):
            fractional_kernel(0.5, 1.0, SpectralGrid(1, 4.0, 256), 1.0)
        with pytest.raises(GridTooSmallError):
            mixed_kernel(OperatorParams(1, 0, 0.5), SpectralGrid(1, 4.0, 256), 2.0)

    def test_nonpositive_time(self, grid64, params):
        with pytest.raises(ValueError):
            mixed_kernel(params, grid64, 0.0)

    def test_self_similarity(self):
        g = SpectralGrid(1, 16384.0, 2**19)
        f1 = kernel_profile(0.5, g, t=1.0)
        f16 = kernel_profile(0.5, g, t=16.0)
        # rescaled t=16 nodes are 16x denser; compare where they coincide with t=1 nodes
        m = 20 * 16
        np.testing.assert_allclose(f16.r[: 16 * m: 16], f1.r[:m], rtol=1e-14)
        assert np.abs(f1.samples[:m] - f16.samples[: 16 * m: 16]).max() < 1e-6

    def test_profile_shape(self):
        g = SpectralGrid(1, 4096.0, 2**16)
        prof = kernel_profile(0.75, g, t=1.0)
        assert (prof.samples > 0).all()
        assert (np.diff(prof.samples) <= 1e-15).all()

    @pytest.mark.parametrize("s", [0.5, 0.75])
    def test_peak_constant(self, s):
        g = SpectralGrid(1, 4096.0, 2**16)
        prof = kernel_profile(s, g, t=1.0)
        assert prof.samples[0] == pytest.approx(kernel_peak_constant(1.0, s, 1), rel=1e-5)

    def test_peak_constant_cauchy(self):
        assert kernel_peak_constant(1.0, 0.5, 1) == pytest.approx(1 / np.pi, rel=1e-14)
        # b rescales time: K(0,t) with diffusivity b equals K(0, b t)
        assert kernel_peak_constant(2.0, 0.5, 1) == pytest.approx(1 / (2 * np.pi), rel=1e-14)


def test_field_csv(tmp_path, grid64):
    path = tmp_path / "k.csv"
    field_to_csv(bump(grid64, 3.0), path)
    data = np.loadtxt(path, delimiter=",", skiprows=1)
    assert data.shape == (64, 2)
    assert path.read_text().splitlines()[0] == "x,value"
