"""Offspring-law table identities and conditioned-tree level laws.

The finite-p level laws have exact oracles: iterating the offspring
generating function f(s) = s + (1-s)**gamma / gamma gives the survival
probabilities and conditioned transforms in closed form, so the Monte
Carlo checks carry no discretization bias; the continuum comparison is
a separate deterministic convergence check.
"""

import math

import numpy as np
import pytest
from scipy import stats

from stabletrees.analytic import DomainError, csbp_semigroup, height_tail, zolotarev_lt
from stabletrees.samplers.brownian import BudgetError
from stabletrees.samplers.galton_watson import (
    OffspringLaw,
    _simulate_depths,
    gw_offspring,
    gw_time_step,
    gw_tree_coding,
)
from stabletrees.samplers.streams import make_rng


def f_iter(s, gamma, k):
    """k-fold iterate of the offspring generating function at s."""
    for _ in range(k):
        s = s + (1.0 - s) ** gamma / gamma
    return s


def lattice_depths(cf, p):
    """Integer generation of every vertex (terminal zero dropped)."""
    return np.rint(cf.values[:-1] * p).astype(np.int64)


class TestOffspringLaw:
    def test_gamma2(self):
        law = gw_offspring(2.0)
        assert np.array_equal(law.pmf, [0.5, 0.0, 0.5])
        assert law.tail_mass == 0.0
        assert law.mean() == 1.0

    def test_head_probabilities(self):
        law = gw_offspring(1.5)
        assert law.pmf[0] == pytest.approx(2.0 / 3.0, abs=1e-15)
        assert law.pmf[1] == 0.0
        assert law.pmf[2] == pytest.approx(0.25, abs=1e-15)
        # k=3 from the recurrence: 0.25 * (2 - 1.5) / 3
        assert law.pmf[3] == pytest.approx(0.25 * 0.5 / 3.0, abs=1e-15)

    @pytest.mark.parametrize("gamma", [1.2, 1.5, 1.9])
    def test_total_mass(self, gamma):
        law = gw_offspring(gamma)
        total = math.fsum(law.pmf.tolist()) + law.tail_mass
        assert abs(total - 1.0) < 1e-12

    @pytest.mark.parametrize("gamma", [1.2, 1.5, 1.9, 2.0])
    def test_critical_mean(self, gamma):
        # tolerance reflects cumprod roundoff over a million table entries,
        # amplified by the factor k relative to the plain mass sum
        assert gw_offspring(gamma).mean() == pytest.approx(1.0, abs=1e-9)

    def test_survival_matches_table(self):
        law = gw_offspring(1.5)
        for k in [1, 5, 50, 1000]:
            from_table = law.pmf[k + 1 :].sum() + law.tail_mass
            assert float(law.survival(k)) == pytest.approx(from_table, rel=1e-10)

    def test_tail_exponent(self):
        law = gw_offspring(1.5)
        g = 1.5
        limit = (g - 1.0) / (g * math.gamma(2.0 - g))
        assert float(law.survival(1e5)) * 1e5**g == pytest.approx(limit, rel=2e-3)
        # pmf ratio check: xi(2k)/xi(k) -> 2**-(1+gamma)
        assert law.pmf[20000] / law.pmf[10000] == pytest.approx(2.0 ** -2.5, rel=1e-3)

    def test_sampler_frequencies(self):
        law = gw_offspring(1.5)
        rng = make_rng(11)
        n = 200_000
        x = law.sample(rng, n)
        assert not (x == 1).any()
        keep = [0, 2, 3, 4, 5, 6, 7, 8, 9]
        cats = np.concatenate([law.pmf[keep], [float(law.survival(9))]])
        counts = np.bincount(np.minimum(x, 10), minlength=11)
        obs = np.concatenate([counts[keep], [counts[10]]])
        chi = stats.chisquare(obs, cats * n)
        assert chi.pvalue > 0.01
        for thr in (10, 100):
            s = float(law.survival(thr))
            z = ((x > thr).mean() - s) / math.sqrt(s * (1 - s) / n)
            assert abs(z) < 4.0

    def test_sampler_gamma2(self):
        law = gw_offspring(2.0)
        rng = make_rng(12)
        x = law.sample(rng, 50_000)
        assert set(np.unique(x)) == {0, 2}
        assert x.mean() == pytest.approx(1.0, abs=0.02)
        assert isinstance(law.sample(rng), int)

    def test_analytic_tail_branch(self):
        # a deliberately short table forces draws through the inversion path
        full = gw_offspring(1.5)
        law = OffspringLaw(
            gamma=1.5, pmf=full.pmf[:65].copy(), tail_mass=float(full.survival(64))
        )
        rng = make_rng(13)
        n = 200_000
        x = law.sample(rng, n)
        assert x.max() > 64
        s = float(full.survival(256))
        hits = int((x > 256).sum())
        assert abs(hits - n * s) < 4.0 * math.sqrt(n * s)


class TestTreeCoding:
    def test_conditioning_and_shape(self):
        rng = make_rng(21)
        for gamma in (1.5, 2.0):
            for _ in range(50):
                cf = gw_tree_coding(gamma, 16, min_height=0.4, rng=rng)
                assert cf.values[0] == 0.0 and cf.values[-1] == 0.0
                assert cf.values.max() > 0.4
                assert cf.delta == gw_time_step(gamma, 16)
                d = lattice_depths(cf, 16)
                # preorder depth sequences climb by at most one step
                assert d[0] == 0
                assert (np.diff(d) <= 1).all()
                assert (np.abs(cf.values[:-1] * 16 - d) < 1e-9).all()

    def test_p_one_raw_heights(self):
        cf = gw_tree_coding(2.0, 1, seed=3, min_height=0.5)
        assert np.array_equal(cf.values, np.rint(cf.values))
        assert cf.values.max() >= 1.0

    def test_height_cap_prunes(self):
        rng = make_rng(22)
        capped = [
            gw_tree_coding(2.0, 32, min_height=0.5, rng=rng, height_cap=0.75)
            for _ in range(400)
        ]
        assert max(cf.values.max() for cf in capped) <= 0.75 + 1e-9
        # the law strictly below the cap is untouched: compare a level count
        # against uncapped trees
        rng2 = make_rng(23)
        free = [gw_tree_coding(2.0, 32, min_height=0.5, rng=rng2) for _ in range(400)]
        z_capped = [np.count_nonzero(lattice_depths(cf, 32) == 18) for cf in capped]
        z_free = [np.count_nonzero(lattice_depths(cf, 32) == 18) for cf in free]
        assert stats.ks_2samp(z_capped, z_free).pvalue > 0.01

    def test_level_law_at_conditioning_height(self):
        # Z_k | height >= k has generating function (f^k(s) - f^k(0)) / (1 - f^k(0));
        # the subtree-count statistic is a Binomial thinning of Z_k with
        # reach probability 1 - f^m(0), so a tilted power of it estimates
        # E[s^Z] without bias.  Continuum comparison is test_continuum_limit.
        gamma, p, b, m = 2.0, 48, 0.5, 12
        k = int(p * b) + 1
        reps = 10_000
        rng = make_rng(24)
        w = 1.0 - f_iter(0.0, gamma, m)
        lam_grid = [0.5, 1.0, 2.0]
        scale = (gamma / p) ** (1.0 / (gamma - 1.0))
        counts = np.empty((reps, 2), dtype=np.int64)
        for i in range(reps):
            cf = gw_tree_coding(
                gamma, p, min_height=b, rng=rng, height_cap=(k + m) / p
            )
            d = lattice_depths(cf, p)
            at = np.flatnonzero(d == k)
            nxt = np.concatenate([at[1:], [d.size]])
            reach = sum(1 for s0, s1 in zip(at, nxt) if d[s0:s1].max() >= k + m)
            counts[i] = (at.size, reach)
        qk = f_iter(0.0, gamma, k)
        for lam in lam_grid:
            s = math.exp(-lam * scale)
            oracle = (f_iter(s, gamma, k) - qk) / (1.0 - qk)
            x = 1.0 - (1.0 - s) / w
            est = x ** counts[:, 1].astype(np.float64)
            err = est.mean() - oracle
            assert abs(err) < 3.0 * est.std(ddof=1) / math.sqrt(reps) + 1e-4
            # direct transform of the occupation estimate agrees too
            direct = np.exp(-lam * scale * counts[:, 0])
            err2 = direct.mean() - oracle
            assert abs(err2) < 3.0 * direct.std(ddof=1) / math.sqrt(reps) + 1e-4

    def test_level_law_below_conditioning_height(self):
        # measure at j with the tree conditioned to reach k > j; oracle
        # E[s^{Z_j}; height >= k] = f^j(s) - f^j(s q_{k-j})
        gamma, p = 2.0, 48
        j, k = 24, 49
        reps = 4000
        rng = make_rng(25)
        scale = (gamma / p) ** (1.0 / (gamma - 1.0))
        z = np.empty(reps, dtype=np.int64)
        for i in range(reps):
            cf = gw_tree_coding(
                gamma, p, min_height=k / p - 1e-9, rng=rng, height_cap=(k + 1) / p
            )
            z[i] = np.count_nonzero(lattice_depths(cf, p) == j)
        qk = f_iter(0.0, gamma, k)
        qgap = f_iter(0.0, gamma, k - j)
        for lam in (0.5, 2.0):
            s = math.exp(-lam * scale)
            oracle = (f_iter(s, gamma, j) - f_iter(s * qgap, gamma, j)) / (1.0 - qk)
            est = np.exp(-lam * scale * z.astype(np.float64))
            err = est.mean() - oracle
            assert abs(err) < 3.0 * est.std(ddof=1) / math.sqrt(reps) + 1e-4

    def test_continuum_limit(self):
        # deterministic part: the exact finite-p transforms approach the
        # continuum ones as p grows, at every lambda on the grid
        for gamma in (1.5, 2.0):
            b = 0.5
            for lam in (0.5, 1.0, 2.0):
                gaps = []
                for p in (64, 256, 1024):
                    k = int(p * b) + 1
                    s = math.exp(-lam * (gamma / p) ** (1.0 / (gamma - 1.0)))
                    qk = f_iter(0.0, gamma, k)
                    disc = (f_iter(s, gamma, k) - qk) / (1.0 - qk)
                    gaps.append(abs(disc - zolotarev_lt(gamma, b, lam)))
                assert gaps[2] < gaps[1] < gaps[0]
                assert gaps[2] < 8e-3

    def test_continuum_limit_below_conditioning(self):
        # same, for the level-j law under conditioning at a higher level:
        # N-measure oracle 1 - [u(b,lam) - u(b,lam+v(a-b)) + u(b,v(a-b))]/v(a)
        gamma, a, b = 2.0, 1.0, 0.5
        for lam in (0.5, 2.0):
            va = height_tail(gamma, a)
            vgap = height_tail(gamma, a - b)
            # survival above a given the level-b mass is an independent
            # extinction event per unit of mass, which tilts the transform:
            cont = (
                csbp_semigroup(gamma, b, lam + vgap) - csbp_semigroup(gamma, b, lam)
            ) / va
            gaps = []
            for p in (64, 256, 1024):
                j, k = int(p * b), int(p * a) + 1
                s = math.exp(-lam * (gamma / p) ** (1.0 / (gamma - 1.0)))
                qk = f_iter(0.0, gamma, k)
                qgap = f_iter(0.0, gamma, k - j)
                disc = (f_iter(s, gamma, j) - f_iter(s * qgap, gamma, j)) / (1.0 - qk)
                gaps.append(abs(disc - cont))
            assert gaps[2] < gaps[1] < gaps[0]
            assert gaps[2] < 8e-3

    def test_mean_level_occupation(self):
        # E[Z_k | height >= k] = 1 / (1 - f^k(0)) exactly; the rescaled
        # occupation mean then pins the time-step constant
        gamma, p, b = 2.0, 48, 0.5
        k = int(p * b) + 1
        reps = 6000
        rng = make_rng(26)
        z = np.empty(reps)
        for i in range(reps):
            cf = gw_tree_coding(gamma, p, min_height=b, rng=rng, height_cap=(k + 1) / p)
            z[i] = np.count_nonzero(lattice_depths(cf, p) == k)
        est = z * gw_time_step(gamma, p) * p
        exact = gw_time_step(gamma, p) * p / (1.0 - f_iter(0.0, gamma, k))
        assert est.mean() == pytest.approx(exact, abs=3.0 * est.std(ddof=1) / math.sqrt(reps))
        # the exact discrete mean approaches the continuum mean b, slowly
        # (the correction is logarithmic in p), so check it at larger p
        means = []
        for pp in (256, 1024, 4096):
            kk = int(pp * b) + 1
            means.append(
                gw_time_step(gamma, pp) * pp / (1.0 - f_iter(0.0, gamma, kk))
            )
        assert abs(means[2] - b) < abs(means[1] - b) < abs(means[0] - b)
        assert means[2] == pytest.approx(b, rel=0.02)

    def test_reproducible(self):
        a = gw_tree_coding(1.5, 32, seed=5, min_height=0.5).values
        b = gw_tree_coding(1.5, 32, seed=5, min_height=0.5).values
        assert np.array_equal(a, b)
        c = gw_tree_coding(1.5, 32, seed=6, min_height=0.5).values
        assert not np.array_equal(a, c)

    def test_budget_error(self):
        # a node cap below the conditioning height can never be satisfied
        with pytest.raises(BudgetError):
            gw_tree_coding(2.0, 32, seed=1, min_height=2.0, max_nodes=30, max_tries=200)

    def test_kernel_tail_branch(self):
        # short-table law pushed through the tree kernel: the analytic tail
        # draw must fire and still produce valid preorder output
        full = gw_offspring(1.5)
        law = OffspringLaw(
            gamma=1.5, pmf=full.pmf[:33].copy(), tail_mass=float(full.survival(32))
        )
        rstate = np.array([987654321], dtype=np.uint64)
        for _ in range(200):
            depths = _simulate_depths(law, rstate, 8, 1 << 62, 1_000_000, 100_000)
            assert depths[0] == 0
            assert (np.diff(depths) <= 1).all()
            assert depths.max() >= 8

    def test_bad_args(self):
        with pytest.raises(DomainError):
            gw_tree_coding(1.0, 16, seed=0, min_height=0.5)
        with pytest.raises(DomainError):
            gw_tree_coding(2.0, 0, seed=0, min_height=0.5)
        with pytest.raises(DomainError):
            gw_tree_coding(2.0, 16, seed=0, min_height=0.0)
        with pytest.raises(DomainError):
            gw_tree_coding(2.0, 16, seed=0, min_height=1.0, height_cap=0.5)
        with pytest.raises(DomainError):
            gw_offspring(2.5)
