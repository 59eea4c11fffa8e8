import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from coopnet.covariance import Cluster, CovarianceSet, ValidationError, check_clusters
from coopnet.cvxcore import SolverError, Status
from coopnet.netmodel import (
    NetworkGeometry,
    derive_seed,
    exact_rates,
    rate_no_coop,
    received_powers,
    sample_channel,
)
from coopnet.precoders import (
    SingularChannelError,
    Utility,
    closest_base_clusters,
    covariance_to_precoder,
    dpc_sum_rate,
    mimo_exact_rates,
    sin_mimo_precode,
    sin_precode,
    zf_covariances,
    zf_rates,
)
from coopnet.validation import water_filling, zf_grid_oracle

import oracles
from conftest import crandn


def channel(n, seed):
    return sample_channel(NetworkGeometry(n_bases=n), derive_seed(2024, n, seed)).entries


# --- clusters ---------------------------------------------------------------

def test_closest_base_clusters_wraps():
    c = closest_base_clusters(19, 3)
    assert c[0] == Cluster(1, (1, 2, 19))
    assert c[18].bases == (1, 18, 19)
    assert all(cl.size == 3 for cl in c)


def test_closest_base_clusters_trivial_sizes():
    assert [c.bases for c in closest_base_clusters(19, 1)] == [(k,) for k in range(1, 20)]
    assert all(c.bases == tuple(range(1, 20)) for c in closest_base_clusters(19, 19))


@pytest.mark.parametrize("size", [0, 2, 4, 21])
def test_closest_base_clusters_rejects(size):
    with pytest.raises(ValidationError):
        closest_base_clusters(19, size)


def test_association_matrix():
    C = Cluster(3, (2, 3, 4)).association(5)
    assert C.shape == (5, 3)
    np.testing.assert_array_equal(C.T @ C, np.eye(3))
    np.testing.assert_array_equal(np.argmax(C, axis=0), [1, 2, 3])


@pytest.mark.parametrize("bases", [(), (2, 1), (1, 1)])
def test_cluster_validation(bases):
    with pytest.raises(ValidationError):
        Cluster(1, bases)


def test_cluster_cover_validation():
    with pytest.raises(ValidationError):
        check_clusters([Cluster(1, (1,)), Cluster(1, (2,))], 2)
    with pytest.raises(ValidationError):
        check_clusters([Cluster(1, (1,)), Cluster(2, (3,))], 2)


# --- covariance to precoder ---------------------------------------------------

def test_precoder_identity():
    G = covariance_to_precoder(np.eye(3))
    np.testing.assert_allclose(G @ G.conj().T, np.eye(3), atol=1e-14)
    np.testing.assert_allclose(np.abs(G.conj().T @ G), np.eye(3), atol=1e-14)


def test_precoder_rank_one():
    G = covariance_to_precoder(np.diag([4.0, 0.0]))
    assert G.shape == (2, 1)
    np.testing.assert_allclose(np.abs(G[:, 0]), [2.0, 0.0], atol=1e-14)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32), st.integers(1, 6), st.integers(1, 6))
def test_precoder_reconstructs(seed, m, rank):
    rng = np.random.default_rng(seed)
    A = crandn(rng, m, min(rank, m))
    Q = A @ A.conj().T
    G = covariance_to_precoder(Q)
    assert G.shape[1] == np.linalg.matrix_rank(Q, tol=1e-10 * np.trace(Q).real)
    assert np.abs(G @ G.conj().T - Q).max() <= 1e-8 * (1 + np.abs(Q).max())


def test_precoder_rejects_non_psd():
    with pytest.raises(ValidationError):
        covariance_to_precoder(np.diag([1.0, -0.1]))


# --- DPC --------------------------------------------------------------------

def test_dpc_single_user():
    assert dpc_sum_rate(np.array([[0.7j]]), 5.0, unit="nats") == pytest.approx(np.log1p(0.49 * 5), rel=1e-4)


def test_dpc_budget_exhaustion_raises(monkeypatch):
    from coopnet import precoders
    from coopnet.cvxcore import minimax

    def capped(H, P, tol):
        return minimax.solve_minimax_bc(H, P, 1e-14, max_iter=1)
    monkeypatch.setattr(precoders, "solve_minimax_bc", capped)
    with pytest.raises(SolverError):
        precoders.dpc_sum_rate(channel(4, 0), 100.0)


def test_dpc_grows_while_no_coop_saturates():
    geo = NetworkGeometry()
    H = sample_channel(geo, derive_seed(5, 0)).entries
    d = [dpc_sum_rate(H, 10 ** (db / 10)) / 19 for db in (24.0, 30.0)]
    n = [rate_no_coop(H, 10 ** (db / 10)).sum() / 19 for db in (24.0, 30.0)]
    # 6 dB more power: about 2 bits more per base with cooperation
    assert d[1] - d[0] > 1.5
    assert n[1] - n[0] < 0.1


# --- ZF ---------------------------------------------------------------------

def test_zf_identity():
    z = zf_rates(np.eye(4), 3.0, unit="nats")
    np.testing.assert_allclose(z.gamma, 3.0, rtol=1e-6)
    np.testing.assert_allclose(z.rates, np.log(4.0), rtol=1e-6)


def test_zf_diagonal():
    z = zf_rates(np.diag([2.0, 1.0]), 1.0, unit="nats")
    np.testing.assert_allclose(z.gamma, [4.0, 1.0], rtol=1e-6)
    np.testing.assert_allclose(z.rates, np.log([5.0, 2.0]), rtol=1e-6)


@pytest.mark.parametrize("seed", range(5))
def test_zf_matches_grid_and_cvxpy(seed):
    H = channel(3, seed)
    P = 2.0
    z = zf_rates(H, P, tol=1e-9)
    g = zf_grid_oracle(H, P)
    assert np.abs(z.gamma - g).max() <= 1e-3 * P
    # the grid point can never beat the optimum
    assert np.log1p(g).sum() <= np.log1p(z.gamma).sum() + 1e-8
    g, val = oracles.zf_gamma(H, P)
    assert z.solution.objective == pytest.approx(val, abs=1e-6)


@pytest.mark.parametrize("n", [2, 5, 9])
def test_zf_nulling_and_power(n):
    H = channel(n, 1)
    P = 10.0
    z = zf_rates(H, P)
    HW = H @ z.W
    norms = np.outer(np.linalg.norm(H, axis=1), np.linalg.norm(z.W, axis=0))
    off = ~np.eye(n, dtype=bool)
    assert np.all(np.abs(HW[off]) <= 1e-9 * norms[off])
    assert np.all(z.base_powers <= P + 1e-8)
    assert np.all(zf_covariances(z).base_powers() <= P + 1e-8)


def test_zf_singular_channel():
    H = np.array([[1.0, 2.0], [2.0, 4.0]])
    with pytest.raises(SingularChannelError):
        zf_rates(H, 1.0)
    with pytest.raises(SingularChannelError):
        zf_rates(channel(3, 0), 1.0, cond_limit=1.0)


# --- SIN --------------------------------------------------------------------

def test_sin_single_user():
    H = np.array([[0.6 + 0.8j]])
    s = sin_precode(H, 3.0, [Cluster(1, (1,))], unit="nats", tol=1e-9)
    assert s.covariances.blocks[0][0, 0].real == pytest.approx(3.0, rel=1e-7)
    assert s.tilde_rates[0] == pytest.approx(np.log(4.0), rel=1e-7)
    assert s.exact_rates[0] == pytest.approx(np.log(4.0), rel=1e-7)


@pytest.mark.parametrize("n,size,P", [(3, None, 5.0), (4, None, 0.5), (5, 3, 10.0), (7, 5, 3.0)])
def test_sin_matches_conic_oracle(n, size, P):
    H = channel(n, 7)
    clusters = None if size is None else closest_base_clusters(n, size)
    s = sin_precode(H, P, clusters, unit="nats", tol=1e-9)
    ref = oracles.sin_sum_rate(H, P, None if clusters is None else [list(c.positions()) for c in clusters])
    assert s.utility_value == pytest.approx(ref, abs=1e-6)
    assert s.solution.status is Status.OPTIMAL


def test_sin_sum_power_matches_conic_oracle():
    H = channel(4, 3)
    s = sin_precode(H, 4.0, unit="nats", tol=1e-9, power="sum")
    assert s.utility_value == pytest.approx(oracles.sin_sum_rate(H, 4.0, power="sum"), abs=1e-6)
    assert sum(np.trace(b).real for b in s.covariances.blocks) <= 4.0 + 1e-8


def test_sin_weighted_matches_conic_oracle():
    H = channel(3, 4)
    w = [2.0, 0.5, 1.0]
    s = sin_precode(H, 5.0, utility=Utility.weighted(w), unit="nats", tol=1e-9)
    assert s.solution.objective == pytest.approx(oracles.sin_sum_rate(H, 5.0, weights=w), abs=1e-6)


def test_sin_proportional_fair():
    H = channel(4, 5)
    s = sin_precode(H, 5.0, utility=Utility.proportional_fair(), unit="nats", tol=1e-9)
    t = sin_precode(H, 5.0, unit="nats", tol=1e-9)
    # fairer allocation: smallest user rate at least the sum-rate solution's
    assert s.tilde_rates.min() >= t.tilde_rates.min() - 1e-6
    assert s.utility_value >= Utility.proportional_fair()(t.tilde_rates) - 1e-6
    assert t.utility_value >= s.tilde_rates.sum() - 1e-6


def test_utility_values():
    r = np.array([1.0, 2.0])
    assert Utility.sum_rate()(r) == 3.0
    assert Utility.weighted([2.0, 0.0])(r) == 2.0
    assert Utility.proportional_fair()(r) == pytest.approx(np.log(1 + 1e-9) + np.log(2 + 1e-9))
    with pytest.raises(ValueError):
        Utility.weighted([-1.0, 1.0])


def test_sin_partial_support_worked_example():
    # five bases, clusters of three: user 3 is served by bases 2, 3 and 4
    H = channel(5, 2)
    s = sin_precode(H, 4.0, closest_base_clusters(5, 3))
    full = s.covariances.full(2)
    assert s.covariances.clusters[2].bases == (2, 3, 4)
    outside = [0, 4]
    assert np.all(full[outside, :] == 0) and np.all(full[:, outside] == 0)
    assert np.abs(full[1:4, 1:4]).max() > 0


def test_sin_full_at_least_zf():
    for seed in range(4):
        H = channel(4, 10 + seed)
        P = 10.0
        z = zf_rates(H, P, unit="nats")
        s = sin_precode(H, P, unit="nats")
        assert s.utility_value >= z.rates.sum() - 1e-4


def test_zf_covariances_are_sin_feasible_and_tight():
    H = channel(5, 3)
    P = 8.0
    z = zf_rates(H, P, unit="nats")
    cov = zf_covariances(z)
    Pw = received_powers(H, cov)
    own = np.diag(Pw)
    interf = Pw.sum(axis=1) - own
    surrogate = np.log1p(Pw.sum(axis=1)) - interf
    assert np.abs(interf).max() <= 1e-9 * own.max()
    np.testing.assert_allclose(surrogate, np.log1p(z.gamma), rtol=1e-9)
    assert np.all(cov.base_powers() <= P + 1e-8)


def test_sin_zero_channel_row():
    H = channel(4, 6).copy()
    H[1, :] = 0.0
    s = sin_precode(H, 5.0, unit="nats", tol=1e-9)
    assert s.tilde_rates[1] == 0.0 and s.exact_rates[1] == 0.0
    assert np.all(s.covariances.blocks[1] == 0)
    # user 2 sees no interference from the others
    assert received_powers(H, s.covariances)[1].max() <= 1e-10
    assert s.solution.optimal


def test_sin_zero_own_cluster_channel():
    H = channel(5, 8).copy()
    H[2, [1, 2, 3]] = 0.0            # user 3 cannot hear its own cluster
    s = sin_precode(H, 4.0, closest_base_clusters(5, 3), unit="nats")
    assert s.tilde_rates[2] == 0.0
    assert np.all(s.exact_rates >= s.tilde_rates - 1e-9)


def test_sin_input_validation():
    H = channel(3, 0)
    with pytest.raises(ValueError):
        sin_precode(H, 0.0)
    with pytest.raises(ValidationError):
        sin_precode(H, 1.0, [Cluster(1, (1,)), Cluster(2, (2,))])
    with pytest.raises(ValueError):
        sin_precode(H, 1.0, power="pooled")


@settings(max_examples=12, deadline=None)
@given(st.integers(0, 2**32), st.sampled_from([2, 3, 4]), st.floats(-5, 30))
def test_sin_properties(seed, n, snr_db):
    H = sample_channel(NetworkGeometry(n_bases=n), seed).entries
    P = 10 ** (snr_db / 10)
    s = sin_precode(H, P, unit="nats")
    # surrogate bound and per-antenna power
    assert np.all(s.tilde_rates <= s.exact_rates + 1e-9)
    assert np.all(s.covariances.base_powers() <= P + 1e-8)
    for Q in s.covariances.blocks:
        assert np.linalg.eigvalsh(Q).min() >= -1e-9 * max(np.trace(Q).real, 1e-300)
    np.testing.assert_allclose(exact_rates(H, s.covariances, "nats"), s.exact_rates)


@pytest.mark.parametrize("seed", range(2))
def test_sin_cluster_nesting(seed):
    n = 7
    H = channel(n, 20 + seed)
    vals = [sin_precode(H, 20.0, None if c == n else closest_base_clusters(n, c), unit="nats").utility_value
            for c in (1, 3, 5, 7)]
    assert np.all(np.diff(vals) >= -1e-5 * (1 + max(vals)))


# --- MIMO SIN ---------------------------------------------------------------

def test_mimo_single_user_water_filling(rng):
    H = crandn(rng, 3, 4)
    m = sin_mimo_precode([H], 6.0, unit="nats", tol=1e-10)
    _, cap = water_filling(np.linalg.svd(H, compute_uv=False) ** 2, 6.0)
    assert m.tilde_rates[0] == pytest.approx(cap, rel=1e-6)
    assert m.exact_rates[0] == pytest.approx(cap, rel=1e-6)


def test_mimo_matches_single_antenna_sum_power():
    H = channel(4, 9)
    s = sin_precode(H, 5.0, unit="nats", tol=1e-10, power="sum")
    m = sin_mimo_precode([H[i:i + 1] for i in range(4)], 5.0, unit="nats", tol=1e-10)
    assert m.utility_value == pytest.approx(s.utility_value, abs=1e-6)


def test_mimo_matches_conic_oracle(rng):
    chans = [crandn(rng, 2, 4) for _ in range(2)]
    m = sin_mimo_precode(chans, 3.0, unit="nats", tol=1e-9)
    assert m.utility_value == pytest.approx(oracles.mimo_sin_sum_rate(chans, 3.0), abs=1e-6)
    assert np.all(m.tilde_rates <= m.exact_rates + 1e-9)
    assert sum(np.trace(Q).real for Q in m.covariances) <= 3.0 + 1e-8


def test_mimo_fewer_antennas_than_users(rng):
    chans = [crandn(rng, 1, 2) for _ in range(4)]
    m = sin_mimo_precode(chans, 2.0)
    assert m.solution.optimal
    np.testing.assert_allclose(mimo_exact_rates(chans, m.covariances), m.exact_rates)


def test_mimo_input_validation(rng):
    with pytest.raises(ValidationError):
        sin_mimo_precode([crandn(rng, 2, 3), crandn(rng, 2, 4)], 1.0)
    with pytest.raises(ValueError):
        sin_mimo_precode([], 1.0)
