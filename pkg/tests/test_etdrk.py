"""Phi functions and steppers against arbitrary-precision and ODE oracles."""

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pdeforge.etdrk import (
    SMALL_ARG,
    Etdrk2Tables,
    Etdrk4Tables,
    IntegrationBlowup,
    Stepper,
    integrate,
    phi1,
    phi2,
    phi3,
    precompute_etdrk2,
    precompute_etdrk4,
    step_etdrk2,
    step_etdrk4,
)
from pdeforge.spectral import Field, make_grid

mpmath.mp.dps = 50


def phi_exact(order: int, z) -> complex:
    """phi_m(z) = 1F1(1; m+1; z) / m!, evaluated at 50 digits.

    The hypergeometric form sidesteps the subtractive cancellation that makes
    the defining ratio useless for tiny |z| even in multiprecision.
    """
    zm = mpmath.mpmathify(z)
    return complex(mpmath.hyp1f1(1, order + 1, zm) / mpmath.factorial(order))


PHI_FUNCS = {1: phi1, 2: phi2, 3: phi3}

# Arguments spanning the series branch, the crossover, and the direct branch,
# on the real line and off it.
PHI_ARGS = [
    0.0,
    1e-9,
    -1e-9,
    1e-4,
    -1e-4,
    9.9e-3,
    -9.9e-3,
    1.01e-2,
    -1.01e-2,
    0.5,
    -0.5,
    -1.0,
    -10.0,
    -200.0,
    2.0,
    1e-9j,
    -1e-3 + 1e-3j,
    2j,
    -5.0 + 3.0j,
    -0.009 + 0.004j,
]


class TestPhiFunctions:
    @pytest.mark.parametrize("order", [1, 2, 3])
    @pytest.mark.parametrize("z", PHI_ARGS)
    def test_matches_mpmath(self, order, z):
        exact = phi_exact(order, z)
        got = complex(PHI_FUNCS[order](np.asarray(z)))
        assert got == pytest.approx(exact, rel=1e-9, abs=1e-12)

    def test_values_at_zero(self):
        assert float(phi1(np.asarray(0.0))) == 1.0
        assert float(phi2(np.asarray(0.0))) == 0.5
        assert float(phi3(np.asarray(0.0))) == pytest.approx(1.0 / 6.0)

    def test_phi1_at_minus_one(self):
        # (e^-1 - 1)/(-1) = 1 - 1/e
        assert float(phi1(np.asarray(-1.0))) == pytest.approx(0.6321205588285577, rel=1e-15)

    def test_branch_continuity_at_crossover(self):
        # The two branches must agree to ~1e-9 where they hand over.
        for sign in (1.0, -1.0):
            below = complex(phi2(np.asarray(sign * (SMALL_ARG - 1e-12))))
            above = complex(phi2(np.asarray(sign * (SMALL_ARG + 1e-12))))
            assert below == pytest.approx(above, rel=1e-9)

    def test_array_evaluation_matches_scalar(self):
        z = np.array([-3.0, -1e-5, 0.0, 1e-3, 0.7])
        batch = phi3(z)
        for i, zi in enumerate(z):
            assert batch[i] == pytest.approx(float(phi3(np.asarray(zi))), rel=1e-14)

    @settings(max_examples=60, deadline=None)
    @given(
        st.floats(min_value=-50.0, max_value=5.0, allow_nan=False),
        st.floats(min_value=-20.0, max_value=20.0, allow_nan=False),
    )
    def test_hypothesis_complex_plane(self, re, im):
        z = complex(re, im)
        for order in (1, 2, 3):
            exact = phi_exact(order, z)
            got = complex(PHI_FUNCS[order](np.asarray(z)))
            assert got == pytest.approx(exact, rel=1e-8, abs=1e-12)


class TestTables:
    def test_etdrk2_table_identities(self):
        sym = np.array([-1.0, -4.0, 0.0])
        dt = 0.3
        t = precompute_etdrk2(sym, dt)
        np.testing.assert_allclose(t.e, np.exp(dt * sym), rtol=1e-14)
        np.testing.assert_allclose(t.f1, dt * phi1(dt * sym), rtol=1e-14)
        np.testing.assert_allclose(t.f2, dt * phi2(dt * sym), rtol=1e-14)

    def test_etdrk4_weights_sum_to_phi1(self):
        # f1 + 2*(f2 + f2) + f3 telescopes: (phi1-3phi2+4phi3) + 4(phi2-2phi3)
        # + (4phi3-phi2) = phi1, the consistency condition for order one.
        z = np.array([-2.0, -0.5, -1e-6, 3.0])
        t = precompute_etdrk4(z, 1.0)
        np.testing.assert_allclose(t.f1 + 4 * t.f2 + t.f3, phi1(z), rtol=1e-12)

    def test_single_precision_cast_keeps_real_real(self):
        t = precompute_etdrk2(np.array([-1.0, -2.0]), 0.1, dtype=np.float32)
        assert t.e.dtype == np.float32
        assert t.f1.dtype == np.float32
        tc = precompute_etdrk4(np.array([-1.0 + 1j]), 0.1, dtype=np.complex64)
        assert tc.e.dtype == np.complex64

    def test_double_tables_by_default(self):
        t = precompute_etdrk2(np.array([-1.0]), 0.1)
        assert t.e.dtype == np.float64

    def test_rejects_bad_inputs(self):
        with pytest.raises(ValueError):
            precompute_etdrk2(np.array([np.nan]), 0.1)
        with pytest.raises(ValueError):
            precompute_etdrk2(np.array([-1.0]), 0.0)
        with pytest.raises(ValueError):
            precompute_etdrk4(np.array([np.inf]), 0.1)


def rk4_reference(f, u0: complex, T: float, n: int) -> complex:
    """Classic RK4 on u' = f(u), fine enough to serve as the truth."""
    h = T / n
    u = u0
    for _ in range(n):
        k1 = f(u)
        k2 = f(u + 0.5 * h * k1)
        k3 = f(u + 0.5 * h * k2)
        k4 = f(u + h * k3)
        u = u + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
    return u


def march(u0, lam, nonlin, dt, steps, order):
    tables = (
        precompute_etdrk2(np.asarray(lam), dt)
        if order == 2
        else precompute_etdrk4(np.asarray(lam), dt)
    )
    step = step_etdrk2 if order == 2 else step_etdrk4
    u = np.asarray(u0)
    for _ in range(steps):
        u = step(u, nonlin, tables)
    return complex(u)


class TestScalarOde:
    """Scalar u' = lam*u + N(u) runs through the exact array code path."""

    def test_linear_scalar_is_exact(self):
        lam = -3.7
        dt = 0.21
        got = march(1.0, lam, lambda u: 0.0 * u, dt, 10, order=2)
        assert got == pytest.approx(np.exp(lam * dt * 10), rel=1e-13)
        got4 = march(1.0, lam, lambda u: 0.0 * u, dt, 10, order=4)
        assert got4 == pytest.approx(np.exp(lam * dt * 10), rel=1e-13)

    def test_etdrk2_one_step_accuracy(self):
        lam, u0, dt = -1.0, 0.4, 1e-3
        truth = rk4_reference(lambda u: lam * u + u**2, u0, dt, 400)
        got = march(u0, lam, lambda u: u**2, dt, 1, order=2)
        assert abs(got - truth) < 1e-6

    def test_etdrk4_one_step_accuracy(self):
        lam, u0, dt = 2j, 0.4 + 0j, 1e-2
        truth = rk4_reference(lambda u: lam * u + u**2, u0, dt, 400)
        got = march(u0, lam, lambda u: u**2, dt, 1, order=4)
        assert abs(got - truth) < 1e-8

    def test_etdrk2_order_two(self):
        lam, u0, T = -1.0, 0.4, 1.0
        truth = rk4_reference(lambda u: lam * u + u**2, u0, T, 20000)
        errs = []
        for k in range(3):
            h = 0.05 / 2**k
            got = march(u0, lam, lambda u: u**2, h, round(T / h), order=2)
            errs.append(abs(got - truth))
        orders = [np.log2(errs[i] / errs[i + 1]) for i in range(2)]
        assert all(1.8 < p < 2.2 for p in orders), orders

    def test_etdrk4_order_four(self):
        lam, u0, T = 2j, 0.4 + 0j, 1.0
        truth = rk4_reference(lambda u: lam * u + u**2, u0, T, 40000)
        errs = []
        for k in range(3):
            h = 0.05 / 2**k
            got = march(u0, lam, lambda u: u**2, h, round(T / h), order=4)
            errs.append(abs(got - truth))
        orders = [np.log2(errs[i] / errs[i + 1]) for i in range(2)]
        assert all(3.5 < p < 4.5 for p in orders), orders


class TestIntegrate:
    def _setup(self, n=8):
        grid = make_grid(n)
        gen = np.random.default_rng(3)
        u0 = Field(gen.standard_normal((1,) + grid.shape), grid)
        from pdeforge.spectral import laplacian_symbol

        tables = precompute_etdrk2(1e-3 * laplacian_symbol(grid), 0.01)
        return grid, u0, Stepper(tables, lambda u: np.zeros_like(u))

    def test_save_every_spacing(self):
        _, u0, stepper = self._setup()
        frames = integrate(u0, stepper, n_steps=6, save_every=2)
        assert len(frames) == 3
        all_frames = integrate(u0, stepper, n_steps=6, save_every=1)
        np.testing.assert_allclose(frames[0].data, all_frames[1].data, rtol=1e-12)
        np.testing.assert_allclose(frames[2].data, all_frames[5].data, rtol=1e-12)

    def test_blowup_detection(self):
        _, u0, _ = self._setup()
        bad = Stepper(
            precompute_etdrk2(np.zeros(u0.grid.shape), 0.01),
            lambda u: np.full_like(u, np.nan),
        )
        with pytest.raises(IntegrationBlowup) as err:
            integrate(u0, bad, n_steps=3, save_every=1)
        assert err.value.step == 1

    def test_check_every_catches_between_saves(self):
        _, u0, _ = self._setup()
        bad = Stepper(
            precompute_etdrk2(np.zeros(u0.grid.shape), 0.01),
            lambda u: np.full_like(u, np.nan),
        )
        with pytest.raises(IntegrationBlowup) as err:
            integrate(u0, bad, n_steps=10, save_every=10, check_every=1)
        assert err.value.step == 1

    def test_deterministic(self):
        _, u0, stepper = self._setup()
        a = integrate(u0, stepper, 5)[-1].data
        b = integrate(u0, stepper, 5)[-1].data
        np.testing.assert_array_equal(a, b)

    def test_stepper_dispatch(self):
        sym = np.array([-1.0])
        s2 = Stepper(precompute_etdrk2(sym, 0.1), lambda u: 0 * u)
        s4 = Stepper(precompute_etdrk4(sym, 0.1), lambda u: 0 * u)
        u = np.array([1.0])
        np.testing.assert_allclose(s2.step(u), np.exp(-0.1), rtol=1e-14)
        np.testing.assert_allclose(s4.step(u), np.exp(-0.1), rtol=1e-14)
        assert isinstance(s4.tables, Etdrk4Tables)
        assert isinstance(s2.tables, Etdrk2Tables)
