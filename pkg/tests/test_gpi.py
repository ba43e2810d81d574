import numpy as np
import pytest

from mwwdr.data import Dataset
from mwwdr.errors import EstimabilityError, SeparationError, ValidationError
from mwwdr.gpi import GpiModel, fit_gpi, g_matrix, g_value
from mwwdr.simstudy import ScenarioConfig, generate_dataset

from oracles import normal_cdf, normal_ppf


def model(gamma, link="probit", constant=False, p=1):
    gamma = np.asarray(gamma, dtype=float)
    return GpiModel(gamma, link, constant, 0 if constant else p, True, 0, 0.0)


class TestGValue:
    def test_zero_coefficients(self):
        assert g_value(model([0.0, 0.0, 0.0]), [1.3], [0.2]) == 0.5

    def test_antisymmetric_cancellation(self):
        m = model([0.0, -0.5, 0.5])
        assert abs(g_value(m, [0.7], [0.7]) - 0.5) < 1e-12

    def test_complement_identity(self):
        rng = np.random.default_rng(2)
        m = model([0.0, -0.8, 0.8])
        for _ in range(25):
            wi, wj = rng.normal(size=2)
            s = g_value(m, [wi], [wj]) + g_value(m, [wj], [wi])
            assert abs(s - 1.0) < 1e-12

    def test_dimension_mismatch(self):
        with pytest.raises(ValidationError):
            g_value(model([0.0, 1.0, 1.0]), [1.0, 2.0], [0.5, 0.5])

    def test_logit_link(self):
        m = model([1.0, 0.0, 0.0], link="logit")
        assert abs(g_value(m, [0.0], [0.0]) - 1 / (1 + np.exp(-1))) < 1e-12

    def test_matrix_matches_scalar(self):
        rng = np.random.default_rng(3)
        w = rng.normal(size=(5, 1))
        m = model([0.2, -0.4, 0.6])
        G = g_matrix(m, w)
        for i in range(5):
            for j in range(5):
                assert abs(G[i, j] - g_value(m, w[i], w[j])) < 1e-12


class TestFitGpi:
    def test_constant_only_closed_form(self, four_row_dataset):
        # observed indicators over (treated, control) pairs: (1, 1, 0, 1)
        m = fit_gpi(four_row_dataset, constant_only=True)
        assert m.converged
        assert abs(m.gamma0 - normal_ppf(0.75)) < 1e-6
        assert abs(m.gamma0 - 0.6744897501) < 1e-6

    def test_constant_only_logit(self, four_row_dataset):
        m = fit_gpi(four_row_dataset, constant_only=True, link="logit")
        assert abs(1 / (1 + np.exp(-m.gamma0)) - 0.75) < 1e-9

    def test_degenerate_response(self):
        ds = Dataset([1, 1, 0, 0], [1.0, 2.0, 3.0, 4.0])  # all indicators 1
        with pytest.raises(SeparationError):
            fit_gpi(ds, constant_only=True)

    def test_single_arm_rejected(self):
        ds = Dataset([1, 1, 1], [1.0, 2.0, 3.0])
        with pytest.raises(EstimabilityError):
            fit_gpi(ds)

    def test_score_zero_at_convergence(self):
        rng = np.random.default_rng(8)
        w = rng.normal(1.0, 0.5, (80, 1))
        z = (rng.random(80) < 0.5).astype(int)
        y = w[:, 0] + rng.normal(0, 1, 80)
        ds = Dataset(z, y, w)
        m = fit_gpi(ds)
        # weighted residual sum is zero within 1e-6 for every component
        from oracles import brute_ugee_residual
        theta = list(m.gamma) + [0.5]
        resid = brute_ugee_residual(list(z), list(y), [list(r) for r in w],
                                    theta, family="msi")
        npairs = 80 * 79 / 2
        assert max(abs(r) for r in resid[:-1]) * npairs < 1e-6

    def test_antisymmetry_of_slopes_under_null(self):
        # under a null generator the fitted slopes are opposite and the
        # intercept is near zero, whatever the noise shape
        cfg = ScenarioConfig(n=2000, reps=1, seed=99)
        _, ds = generate_dataset(cfg, 0)
        m = fit_gpi(ds)
        assert abs(m.gamma0) < 0.08
        assert abs(float(m.gamma11[0] + m.gamma10[0])) < 0.08
        assert m.gamma11[0] < -0.4 and m.gamma10[0] > 0.4

    @pytest.mark.xfail(
        strict=True,
        reason="With the generator's centered chi-square noise the pairwise "
        "probit working model is misspecified: its pseudo-true slopes are "
        "about (-0.69, +0.69), not the (-0.5, +0.5) implied by the normal "
        "approximation (measured mean at n=400 over 300 replications: "
        "(0.00, -0.69, +0.68)). Recovery within 0.03 of the normal-theory "
        "values is unattainable under this data-generating process.")
    def test_normal_theory_parameter_recovery(self):
        rng_reps = 60
        vals = []
        for r in range(rng_reps):
            cfg = ScenarioConfig(n=400, reps=1, seed=1000 + r)
            _, ds = generate_dataset(cfg, 0)
            vals.append(fit_gpi(ds).gamma)
        mean = np.mean(vals, axis=0)
        assert np.max(np.abs(mean - np.array([0.0, -0.5, 0.5]))) < 0.03
