"""Coefficient-law tests against independently evaluated closed forms.

Expected values were frozen from a separate high-precision evaluation
(mpmath, 30 digits) of each formula.
"""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hygrobayes import material as mat
from hygrobayes.errors import DegenerateParametersError, SingularStateError

TABLE_MEANS = dict(
    w_f=200.0, w_80=100.0, lambda_0=0.3, b_tcs=10.0,
    mu=12.0, a=0.6, c_s=900.0, rho_s=1650.0,
)


def params(**overrides):
    return mat.MaterialParams(**{**TABLE_MEANS, **overrides})


class TestMaterialParams:
    def test_rejects_nonpositive(self):
        with pytest.raises(DegenerateParametersError):
            params(lambda_0=0.0)
        with pytest.raises(DegenerateParametersError):
            params(rho_s=-1.0)

    def test_rejects_w80_above_wf(self):
        with pytest.raises(DegenerateParametersError):
            params(w_80=250.0)

    def test_local_state_range(self):
        with pytest.raises(SingularStateError):
            mat.LocalState(theta=20.0, phi=1.0)
        with pytest.raises(SingularStateError):
            mat.LocalState(theta=20.0, phi=-0.1)
        mat.LocalState(theta=20.0, phi=0.0)  # dry limit admitted


class TestApproxFactorB:
    def test_table_means(self):
        assert mat.approx_factor_b(params()) == pytest.approx(4.0 / 3.0, rel=1e-12)

    def test_second_point(self):
        assert mat.approx_factor_b(params(w_f=150.0)) == pytest.approx(2.0, rel=1e-12)

    def test_pole_raises(self):
        with pytest.raises(DegenerateParametersError):
            mat.approx_factor_b(params(w_f=125.0, w_80=100.0))

    def test_invalid_branch_raises(self):
        # w_80 between 0.8 w_f and w_f makes b <= 1: no valid isotherm
        with pytest.raises(DegenerateParametersError):
            mat.approx_factor_b(params(w_f=110.0, w_80=100.0))

    def test_greater_than_one(self):
        for w_f, w_80 in [(200.0, 100.0), (150.0, 100.0), (300.0, 50.0)]:
            assert mat.approx_factor_b(params(w_f=w_f, w_80=w_80)) > 1.0


class TestThermalConductivity:
    def test_dry_limit_is_lambda0(self):
        lam = mat.thermal_conductivity(params(), mat.LocalState(20.0, 0.0))
        assert lam == TABLE_MEANS["lambda_0"]

    def test_table_means_half_humidity(self):
        lam = mat.thermal_conductivity(params(), mat.LocalState(20.0, 0.5))
        assert lam == pytest.approx(0.372727272727, rel=1e-10)

    def test_never_below_dry_value(self):
        p = params()
        phis = np.linspace(0.0, 0.99, 200)
        lam = mat.thermal_conductivity(p, mat.LocalState(np.full_like(phis, 10.0), phis))
        assert np.all(lam >= p.lambda_0)

    def test_pole_guard(self):
        p = params()
        b = mat.approx_factor_b(p)
        s = mat.LocalState.__new__(mat.LocalState)  # bypass range check to reach the pole
        object.__setattr__(s, "theta", 20.0)
        object.__setattr__(s, "phi", b - 1e-12)
        with pytest.raises(SingularStateError):
            mat.thermal_conductivity(p, s)


class TestEvaporationEnthalpy:
    def test_reference_temperature(self):
        assert mat.evaporation_enthalpy(mat.LocalState(0.0, 0.5)) == pytest.approx(2.5008e6)

    def test_twenty_degrees(self):
        # near the tabulated latent heat of water (~2.454e6 at 20 degC)
        h = mat.evaporation_enthalpy(mat.LocalState(20.0, 0.5))
        assert h == pytest.approx(2452744.29, rel=1e-8)

    def test_below_zero(self):
        h = mat.evaporation_enthalpy(mat.LocalState(-10.0, 0.5))
        assert h == pytest.approx(2525505.51, rel=1e-8)


class TestVapourPermeability:
    def test_table_mu(self):
        d = mat.vapour_permeability(params(), mat.LocalState(20.0, 0.5))
        assert d == pytest.approx(1.61432827e-11, rel=1e-8)

    def test_vapour_tight_limit(self):
        d = mat.vapour_permeability(params(mu=1e12), mat.LocalState(20.0, 0.5))
        assert d < 1e-21

    def test_zero_celsius_unit_mu(self):
        d = mat.vapour_permeability(params(mu=1.0), mat.LocalState(0.0, 0.5))
        assert d == pytest.approx(1.9446e-12 * 273.15**0.81, rel=1e-12)


class TestSaturationPressure:
    def test_zero_celsius(self):
        assert mat.saturation_pressure(mat.LocalState(0.0, 0.5)) == 611.0

    def test_twenty_degrees(self):
        # standard steam table gives ~2339 Pa at 20 degC
        p = mat.saturation_pressure(mat.LocalState(20.0, 0.5))
        assert p == pytest.approx(2342.6228529, rel=1e-9)

    def test_strictly_increasing(self):
        thetas = np.linspace(-20.0, 60.0, 1000)
        p = mat.saturation_pressure(mat.LocalState(thetas, np.full_like(thetas, 0.5)))
        assert np.all(np.diff(p) > 0.0)

    def test_slope_matches_finite_difference(self):
        s = mat.LocalState(15.0, 0.5)
        h = 1e-6
        fd = (
            mat.saturation_pressure(mat.LocalState(15.0 + h, 0.5))
            - mat.saturation_pressure(mat.LocalState(15.0 - h, 0.5))
        ) / (2 * h)
        assert mat.saturation_pressure_slope(s) == pytest.approx(fd, rel=1e-7)


class TestLiquidConduction:
    def test_dry_limit(self):
        p = params()
        b = mat.approx_factor_b(p)
        expected = 3.8 * (p.a**2 / p.w_f) * b * (b - 1.0) / b**2
        assert mat.liquid_conduction(p, mat.LocalState(20.0, 0.0)) == pytest.approx(expected)

    def test_table_means_half_humidity(self):
        d = mat.liquid_conduction(params(), mat.LocalState(20.0, 0.5))
        assert d == pytest.approx(1.75489505854e-2, rel=1e-10)

    def test_no_absorption_no_transport(self):
        d = mat.liquid_conduction(params(a=1e-300), mat.LocalState(20.0, 0.5))
        assert d == pytest.approx(0.0, abs=1e-300)


class TestStorageTerms:
    def test_enthalpy_capacity_product(self):
        assert mat.enthalpy_capacity(params()) == pytest.approx(1.485e6)
        assert mat.enthalpy_capacity(params(c_s=1800.0)) == pytest.approx(2.97e6)

    def test_moisture_content_at_w80(self):
        # the b-formula makes w(0.8) = w_80 an identity
        for w_f, w_80 in [(200.0, 100.0), (150.0, 100.0), (321.0, 87.0)]:
            p = params(w_f=w_f, w_80=w_80)
            assert mat.moisture_content(p, mat.LocalState(20.0, 0.8)) == pytest.approx(
                w_80, rel=1e-10
            )

    def test_moisture_capacity_dry(self):
        p = params()
        b = mat.approx_factor_b(p)
        assert mat.moisture_capacity(p, mat.LocalState(20.0, 0.0)) == pytest.approx(
            p.w_f * (b - 1.0) / b
        )

    def test_capacity_is_content_derivative(self):
        p = params()
        h = 1e-7
        fd = (
            mat.moisture_content(p, mat.LocalState(20.0, 0.5 + h))
            - mat.moisture_content(p, mat.LocalState(20.0, 0.5 - h))
        ) / (2 * h)
        assert mat.moisture_capacity(p, mat.LocalState(20.0, 0.5)) == pytest.approx(
            fd, rel=1e-6
        )

    def test_content_monotone(self):
        p = params()
        phis = np.linspace(0.0, 0.99, 1000)
        w = mat.moisture_content(p, mat.LocalState(np.full_like(phis, 20.0), phis))
        assert np.all(np.diff(w) > 0.0)


@settings(max_examples=200, deadline=None)
@given(
    w_f=st.floats(50.0, 500.0),
    ratio=st.floats(0.1, 0.75),
    lambda_0=st.floats(0.05, 3.0),
    b_tcs=st.floats(0.5, 30.0),
    mu=st.floats(1.0, 100.0),
    a=st.floats(0.01, 2.0),
    c_s=st.floats(300.0, 3000.0),
    rho_s=st.floats(300.0, 3000.0),
    theta=st.floats(-20.0, 60.0),
    phi=st.floats(0.0, 0.99),
)
def test_all_coefficients_finite_positive(w_f, ratio, lambda_0, b_tcs, mu, a, c_s, rho_s, theta, phi):
    """For any valid parameters and phi below the pole, every coefficient
    is finite and strictly positive (a = 0 excluded: liquid term vanishes)."""
    p = mat.MaterialParams(w_f, ratio * 0.8 * w_f, lambda_0, b_tcs, mu, a, c_s, rho_s)
    if phi >= mat.approx_factor_b(p) - 1e-6:
        return
    s = mat.LocalState(theta, phi)
    values = [
        mat.thermal_conductivity(p, s),
        mat.evaporation_enthalpy(s),
        mat.vapour_permeability(p, s),
        mat.saturation_pressure(s),
        mat.liquid_conduction(p, s) if phi > 0 else 1.0,
        mat.enthalpy_capacity(p),
        mat.moisture_capacity(p, s),
    ]
    assert all(np.isfinite(v) and v > 0.0 for v in values)


def test_vectorized_matches_scalar():
    p = params()
    thetas = np.array([5.0, 14.0, 24.0])
    phis = np.array([0.5, 0.65, 0.8])
    s = mat.LocalState(thetas, phis)
    lam_vec = mat.thermal_conductivity(p, s)
    for k in range(3):
        lam_k = mat.thermal_conductivity(p, mat.LocalState(thetas[k], phis[k]))
        assert lam_vec[k] == pytest.approx(lam_k, rel=1e-14)
