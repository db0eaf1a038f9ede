import io
import json
import math
from datetime import date, timedelta

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate
from scipy.stats import norm

from corrbreak.changetest import (
    ConfigError,
    NullLaw,
    TestTrajectory,
    critical_value,
    decide,
    null_pdf,
    sample_null,
    statistic_path,
    to_json,
    trajectory,
    write_csv,
    write_json,
)
from corrbreak.panel import DegeneratePrefixError, ReturnPanel, standardize
from corrbreak.powersim import AlternativeSpec, sample_panel


def normal_panel(T, p, seed, rho=0.4):
    rng = np.random.default_rng(seed)
    cov = np.full((p, p), rho) + (1 - rho) * np.eye(p)
    obs = rng.multivariate_normal(np.zeros(p), cov, size=T)
    return ReturnPanel(obs, [f"s{j}" for j in range(p)])


def ordered_integral(f, q, lo, hi, epsabs=None):
    epsabs = epsabs or (1e-11 if q == 2 else 1e-9)
    if q == 2:
        val, _ = integrate.dblquad(lambda h2, h1: f([h1, h2]), lo, hi, lo, lambda h1: h1, epsabs=epsabs)
    else:
        val, _ = integrate.tplquad(
            lambda h3, h2, h1: f([h1, h2, h3]), lo, hi, lo, lambda h1: h1, lo, lambda h1, h2: h2,
            epsabs=epsabs,
        )
    return val


class TestNullPdf:
    def test_q1_at_zero(self):
        assert null_pdf([0.0], NullLaw(1.0)) == pytest.approx(1 / (2 * math.sqrt(math.pi)), abs=1e-15)

    def test_q1_is_normal_density(self):
        for lam in (0.5, 1.0, 1.6):
            for h in (-3.0, 0.2, 4.1):
                assert null_pdf(h, NullLaw(lam)) == pytest.approx(norm.pdf(h, scale=math.sqrt(2) * lam), rel=1e-13)

    @settings(max_examples=50)
    @given(h=st.floats(-20, 20), lam=st.floats(0.05, 3.0))
    def test_q1_even(self, h, lam):
        law = NullLaw(lam)
        assert null_pdf([h], law) == pytest.approx(null_pdf([-h], law), rel=1e-14)

    @pytest.mark.parametrize("lam", [0.7, 1.0, 1.5])
    def test_q1_normalized(self, lam):
        val, _ = integrate.quad(lambda h: null_pdf([h], NullLaw(lam)), -np.inf, np.inf, epsabs=1e-12)
        assert val == pytest.approx(1.0, abs=1e-8)

    @pytest.mark.parametrize("q, lam", [(2, 1.0), (2, 1.4), (3, 1.0)])
    def test_q_gt_1_normalized(self, q, lam):
        law = NullLaw(lam, q)
        L = 14 * lam
        assert ordered_integral(lambda h: null_pdf(h, law), q, -L, L) == pytest.approx(1.0, abs=1e-6)

    def test_ties_and_errors(self):
        law = NullLaw(1.0, 2)
        assert null_pdf([0.5, 0.5], law) == 0.0
        with pytest.raises(ConfigError, match="sorted"):
            null_pdf([0.0, 1.0], law)
        with pytest.raises(ConfigError):
            null_pdf([1.0], law)
        with pytest.raises(ConfigError):
            NullLaw(0.0)
        with pytest.raises(ConfigError):
            NullLaw(1.0, 3, p=2)

    def test_sampler_moments_match_density(self):
        law = NullLaw(1.2, 2)
        L = 14 * law.lam
        mean_h1 = ordered_integral(lambda h: h[0] * null_pdf(h, law), 2, -L, L)
        gap2 = ordered_integral(lambda h: (h[0] - h[1]) ** 2 * null_pdf(h, law), 2, -L, L)
        draws = sample_null(law, 200_000, np.random.default_rng(0))
        assert np.all(draws[:, 0] >= draws[:, 1])
        se = draws[:, 0].std() / math.sqrt(len(draws))
        assert abs(draws[:, 0].mean() - mean_h1) < 4 * se
        assert np.mean((draws[:, 0] - draws[:, 1]) ** 2) == pytest.approx(gap2, rel=0.01)


class TestCriticalValue:
    def test_alpha_010(self):
        assert critical_value(0.10, NullLaw(1.0)) == pytest.approx(2.3261743073533476, abs=1e-12)

    def test_scale_equivariance(self):
        a = critical_value(0.05, NullLaw(0.8))
        assert critical_value(0.05, NullLaw(1.6)) == 2 * a

    def test_decreasing_in_alpha(self):
        vals = [critical_value(a, NullLaw(1.3)) for a in np.linspace(0.001, 0.999, 60)]
        assert all(x > y for x, y in zip(vals, vals[1:]))
        assert critical_value(1 - 1e-12, NullLaw(1.0)) < 1e-10

    @pytest.mark.parametrize("alpha", [0.0, 1.0, -0.1, 1.5])
    def test_alpha_domain(self, alpha):
        with pytest.raises(ConfigError):
            critical_value(alpha, NullLaw(1.0))

    def test_q2_coverage_by_quadrature(self):
        law = NullLaw(1.0, 2)
        c = critical_value(0.10, law, mc_reps=200_000, seed=3)
        coverage = ordered_integral(lambda h: null_pdf(h, law), 2, -c, c)
        # MC quantile error at 2e5 draws is well under 0.003 in probability
        assert coverage == pytest.approx(0.90, abs=0.003)
        assert c == critical_value(0.10, law, mc_reps=200_000, seed=3)

    def test_q2_needs_reps(self):
        with pytest.raises(ConfigError):
            critical_value(0.05, NullLaw(1.0, 2), mc_reps=1000)


class TestTrajectoryRuns:
    def test_final_point_zero(self):
        for seed in range(5):
            traj = trajectory(standardize(normal_panel(150, 2 + seed % 3, seed)))
            assert traj.t[-1] == 150
            assert abs(traj.h[-1]) <= 1e-10
            assert traj.max_abs_h == np.max(np.abs(traj.h))
            assert traj.reject == (traj.max_abs_h > traj.critical)

    def test_default_burn_in(self):
        assert trajectory(standardize(normal_panel(200, 2, 0))).t_min == 30
        assert trajectory(standardize(normal_panel(1000, 2, 0))).t_min == 100
        assert trajectory(standardize(normal_panel(200, 2, 0)), t_min=12).t[0] == 12

    @pytest.mark.parametrize("t_min", [5, 9, 201])
    def test_bad_burn_in(self, t_min):
        with pytest.raises(ConfigError):
            trajectory(standardize(normal_panel(200, 2, 0)), t_min=t_min)

    def test_bivariate_statistic_by_hand(self):
        z = standardize(normal_panel(80, 2, 11))
        traj = trajectory(z, t_min=10)
        o = z.observations
        rT = np.corrcoef(o.T)[0, 1]
        for t in (10, 33, 79):
            rt = np.corrcoef(o[:t].T)[0, 1]
            expected = math.sqrt(t) * ((1 + abs(rt)) - (1 + abs(rT)))
            assert traj.h[t - 10] == pytest.approx(expected, abs=1e-12)
        assert traj.lam == pytest.approx(1 + abs(rT), abs=1e-14)
        assert traj.critical == pytest.approx(math.sqrt(2) * traj.lam * norm.ppf(0.975), abs=1e-12)

    def test_closed_form_matches_jacobi(self):
        for p in (2, 3):
            z = standardize(normal_panel(160, p, 5 + p))
            a = trajectory(z, t_min=10)
            b = trajectory(z, t_min=10, method="jacobi")
            assert np.max(np.abs(a.h - b.h)) <= 1e-9
            assert a.critical == pytest.approx(b.critical, abs=1e-9)

    def test_three_series_uses_smallest(self):
        z = standardize(normal_panel(120, 3, 2))
        traj = trajectory(z)
        assert traj.selector == "smallest"
        assert traj.lam == pytest.approx(min(traj.spectrum), abs=1e-14)
        big = trajectory(z, selector="largest")
        assert big.lam == pytest.approx(max(traj.spectrum), abs=1e-14)

    def test_four_series_iterative(self):
        z = standardize(normal_panel(90, 4, 8))
        traj = trajectory(z)
        assert traj.selector == "largest"
        assert sum(traj.spectrum) == pytest.approx(4.0, abs=1e-10)
        assert trajectory(z, selector=1).selector == "1"

    def test_affine_invariance(self):
        panel = normal_panel(200, 3, 4)
        scaled = ReturnPanel(panel.observations * [2.0, 0.01, 300.0] + [5.0, -1.0, 0.3], panel.names)
        a = trajectory(standardize(panel))
        b = trajectory(standardize(scaled))
        assert np.max(np.abs(a.h - b.h)) <= 1e-9

    def test_degenerate_prefix_propagates(self):
        obs = normal_panel(60, 2, 0).observations.copy()
        obs[:20, 1] = 0.25
        with pytest.raises(DegeneratePrefixError):
            trajectory(standardize(ReturnPanel(obs, ["a", "b"])), t_min=10)

    def test_tied_spectrum_raises_multiplicity(self):
        rng = np.random.default_rng(1)
        x = rng.standard_normal(100)
        y = rng.standard_normal(100)
        x -= x.mean()
        y -= y.mean()
        y -= x * (x @ y) / (x @ x)
        traj = trajectory(standardize(ReturnPanel(np.column_stack([x, y]), ["a", "b"])), alpha=0.1)
        assert traj.q == 2
        assert traj.lam == pytest.approx(1.0, abs=1e-12)
        assert traj.critical == pytest.approx(critical_value(0.1, NullLaw(traj.lam, 2)), rel=1e-12)

    def test_null_size_at_or_below_nominal(self):
        spec = AlternativeSpec(((1.0, 0.5),))
        rejects = sum(
            trajectory(standardize(sample_panel(spec, 1000, seed))).reject for seed in range(2000)
        )
        assert rejects / 2000 <= 0.05

    def test_large_break_detected(self):
        spec = AlternativeSpec(((0.5, 0.5), (0.5, -0.5)))
        rejects = sum(trajectory(standardize(sample_panel(spec, 500, seed))).reject for seed in range(300))
        assert rejects / 300 >= 0.99

    def test_statistic_path_without_names(self):
        obs = standardize(normal_panel(50, 2, 3)).observations
        t, h, spec = statistic_path(obs, t_min=10)
        assert t[0] == 10 and len(h) == 41 and spec[0] >= spec[1]


class TestDecide:
    def make(self, h, critical=2.0):
        h = np.asarray(h, dtype=float)
        t = np.arange(10, 10 + len(h))
        # summary fields deliberately left inert; decide() must recompute them
        return TestTrajectory(
            t=t, h=h, t_min=10, critical=critical, alpha=0.05, argmax_t=-1,
            max_abs_h=-1.0, reject=False, selector="largest", lam=1.0, q=1, spectrum=(1.0, 1.0),
        )

    def test_all_zero(self):
        d = decide(self.make([0.0] * 5))
        assert not d.reject and d.max_abs_h == 0.0 and d.argmax_t == 10

    def test_single_exceedance(self):
        d = decide(self.make([0.1, -0.5, 2.5, 1.0, 0.0]))
        assert d.reject and d.argmax_t == 12 and d.max_abs_h == 2.5

    def test_earliest_tie_and_boundary(self):
        d = decide(self.make([0.3, -2.0, 2.0, 0.0]))
        assert not d.reject and d.argmax_t == 11

    def test_empty(self):
        with pytest.raises(ConfigError):
            decide(self.make([]))


class TestExport:
    def test_json_schema(self):
        panel = normal_panel(100, 2, 3)
        days = [(date(2008, 1, 1) + timedelta(days=i)).isoformat() for i in range(100)]
        labelled = ReturnPanel(panel.observations, panel.names, days)
        traj = trajectory(standardize(labelled), alpha=0.1)
        buf = io.StringIO()
        write_json(traj, buf)
        doc = json.loads(buf.getvalue())
        assert doc["schema"] == "corrbreak/1"
        assert set(doc["meta"]) == {"alpha", "lambda", "q", "selector", "t_min"}
        assert doc["points"][-1] == [100, 0.0]
        assert doc["argmax_t"] == traj.argmax_t
        assert doc["argmax_label"] == labelled.labels[traj.argmax_t - 1]
        assert doc["reject"] == traj.reject
        assert doc == to_json(traj)

    def test_csv(self):
        traj = trajectory(standardize(normal_panel(60, 2, 3)))
        buf = io.StringIO()
        write_csv(traj, buf)
        lines = buf.getvalue().splitlines()
        assert lines[0] == "t,h,critical"
        assert len(lines) == 1 + len(traj.t)
        t, h, c = lines[1].split(",")
        assert int(t) == traj.t_min and float(h) == traj.h[0] and float(c) == traj.critical
