import numpy as np
import pytest
from scipy.special import gammaln, logsumexp
from scipy.stats import chi2

from isingmix import labels as L
from isingmix.coupling import make_complete, make_matching
from isingmix.gmm import ThetaParam, generate
from isingmix.rng import make_rng
from isingmix.theory import solve_m


def tv_distance(samples: np.ndarray, pmf: np.ndarray) -> float:
    emp = np.bincount(L.config_codes(samples), minlength=pmf.size) / samples.shape[0]
    return 0.5 * float(np.abs(emp - pmf).sum())


def test_label_vector_validation():
    with pytest.raises(ValueError):
        L.LabelVector(values=np.array([1, 0, -1]))
    z = L.LabelVector(values=np.array([1, -1, 1, 1]))
    assert z.mean == pytest.approx(0.5, abs=0)
    assert z.n == 4


def test_sample_cw_beta0_is_iid():
    rng = make_rng(100)
    n = 100
    draws = L.sample_cw_batch(n, 0.0, 100_000, rng)
    zbar2 = (draws.mean(axis=1, dtype=float) ** 2).mean()
    assert zbar2 == pytest.approx(1 / n, rel=0.05)


def test_sample_cw_matches_enumeration_n3():
    pmf = L.enumerate_ising_pmf(make_complete(3), 1.0)
    draws = L.sample_cw_batch(3, 1.0, 1_000_000, make_rng(101))
    assert tv_distance(draws, pmf) < 0.01


def test_sample_cw_chi_square_gof():
    # distributional agreement with enumeration at n=12
    n, beta, draws = 12, 0.8, 1_000_000
    pmf = L.enumerate_ising_pmf(make_complete(n), beta)
    samples = L.sample_cw_batch(n, beta, draws, make_rng(102))
    counts = np.bincount(L.config_codes(samples), minlength=2**n)
    expected = draws * pmf
    stat = float(((counts - expected) ** 2 / expected).sum())
    p = float(chi2.sf(stat, df=2**n - 1))
    assert p > 0.001


def test_sample_cw_low_temperature_concentration():
    m = solve_m(1.5)
    draws = L.sample_cw_batch(2000, 1.5, 1000, make_rng(103))
    zbar = np.abs(draws.mean(axis=1, dtype=float))
    assert np.mean(np.abs(zbar - m) < 0.05) >= 0.99


def test_enumerate_basics():
    assert np.array_equal(L.enumerate_ising_pmf(make_complete(2), 0.0), [0.25] * 4)
    p1 = L.enumerate_ising_pmf(
        make_matching(2), 0.0
    )
    assert np.allclose(p1, 0.25)
    # n=1 via a zero coupling
    from isingmix.coupling import CouplingMatrix

    p = L.enumerate_ising_pmf(CouplingMatrix(n=1, entries=np.zeros((1, 1))), 2.0)
    assert np.array_equal(p, [0.5, 0.5])


def test_enumerate_matching_pair_probability():
    pmf = L.enumerate_ising_pmf(make_matching(2), 1.0)
    z = L.all_configs(2)
    p_same = pmf[(z[:, 0] == z[:, 1])].sum()
    assert p_same == pytest.approx(np.e / (np.e + 1 / np.e), rel=1e-12)


def test_enumerate_spin_flip_symmetry():
    rng = np.random.default_rng(5)
    a = rng.random((6, 6)) * (rng.random((6, 6)) < 0.5)
    a = np.triu(a, 1)
    from isingmix.coupling import CouplingMatrix

    c = CouplingMatrix(n=6, entries=a + a.T)
    pmf = L.enumerate_ising_pmf(c, 0.7)
    # code of -z is the bitwise complement
    assert np.allclose(pmf, pmf[::-1], atol=1e-15)


def test_enumerate_size_guard():
    with pytest.raises(L.SamplerError):
        L.all_configs(21)


def test_glauber_beta0_exactly_iid():
    # every visited state stays exactly iid at beta=0
    n = 8
    samples = L.glauber_samples(make_complete(n), 0.0, 200_000, make_rng(104),
                                burn_in_sweeps=1, thin_sweeps=1)
    pmf = np.full(2**n, 1.0 / 2**n)
    assert tv_distance(samples, pmf) < 0.02


def test_glauber_matching_pair_probability():
    samples = L.glauber_samples(make_matching(10), 1.0, 200_000, make_rng(105),
                                burn_in_sweeps=100, thin_sweeps=2)
    target = np.e / (np.e + 1 / np.e)
    for k in range(0, 10, 2):
        p_same = np.mean(samples[:, k] == samples[:, k + 1])
        assert p_same == pytest.approx(target, abs=0.01)


def test_glauber_single_sample_contract():
    z = L.sample_glauber(make_complete(50), 0.8, sweeps=5, rng=make_rng(106))
    assert z.n == 50
    with pytest.raises(L.SamplerError):
        L.sample_glauber(make_complete(4), 0.8, sweeps=0, rng=make_rng(0))
    with pytest.raises(L.SamplerError):
        L.sample_glauber(make_complete(4), -0.1, sweeps=1, rng=make_rng(0))


def _rfim_spec(n=10, beta=0.8, seed=107, theta=1.0):
    th = ThetaParam(vec=np.atleast_1d(np.asarray(theta, dtype=float)))
    rng = make_rng(seed)
    z = L.sample_cw(n, beta, rng)
    ds = generate(th, z, rng)
    return L.RfimSpec(beta=beta, theta=th, x=ds.x)


def test_rfim_beta0_site_means():
    spec = _rfim_spec(beta=0.0)
    w, ys = L.sample_rfim_cw_batch(spec, 100_000, make_rng(108))
    assert np.all(ys == 0.0)
    means = w.mean(axis=0, dtype=float)
    assert np.max(np.abs(means - np.tanh(spec.fields))) < 0.02


def test_rfim_matches_enumeration():
    spec = _rfim_spec()
    pmf = L.enumerate_rfim_cw_pmf(spec)
    w, _ = L.sample_rfim_cw_batch(spec, 200_000, make_rng(109))
    assert tv_distance(w, pmf) < 0.03


def test_rfim_posterior_means_vs_enumeration():
    spec = _rfim_spec()
    pmf = L.enumerate_rfim_cw_pmf(spec)
    exact = L.all_configs(spec.n).astype(float).T @ pmf
    assert np.max(np.abs(L.rfim_posterior_means(spec) - exact)) < 1e-5


def test_rfim_aux_marginal_ks():
    # Kolmogorov-Smirnov agreement of sampled auxiliary fields with the grid law
    spec = _rfim_spec(n=40, beta=1.2, seed=110)
    grid, logw = L.aux_field_grid(spec)
    cdf = np.cumsum(np.exp(logw))
    cdf /= cdf[-1]
    _, ys = L.sample_rfim_cw_batch(spec, 100_000, make_rng(111))
    emp = np.searchsorted(np.sort(ys), grid, side="right") / ys.size
    dstat = np.max(np.abs(emp - cdf))
    assert dstat * np.sqrt(ys.size) < 1.95  # Kolmogorov critical value at p=0.001


def test_rfim_wbar_tracks_tilt_solution():
    from isingmix.estimators import solve_un

    spec = _rfim_spec(n=2000, beta=1.5, seed=112)
    un = solve_un(spec.x, spec.theta, 1.5)
    w, _ = L.sample_rfim_cw_batch(spec, 200, make_rng(113))
    assert abs(w.mean(dtype=float) - un) < 0.05


def test_aux_grid_span():
    spec = _rfim_spec(n=16, beta=0.5, seed=114)
    grid, logw = L.aux_field_grid(spec)
    assert grid.size == L.AUX_GRID_POINTS
    half = 1.0 + 5.0 / np.sqrt(16)
    assert grid[0] == pytest.approx(-half) and grid[-1] == pytest.approx(half)
    assert logsumexp(logw) == pytest.approx(0.0, abs=1e-12)


def test_cw_level_weights_match_partition_oracle():
    # label-only partition: sum_k C(n,k) exp(beta s^2 / 2n)
    n, beta = 30, 1.3
    k = np.arange(n + 1)
    s = 2.0 * k - n
    oracle = logsumexp(gammaln(n + 1) - gammaln(k + 1) - gammaln(n - k + 1)
                       + beta * s**2 / (2 * n))
    lw = L._cw_level_logweights(n, beta)
    assert logsumexp(lw) == pytest.approx(oracle, rel=1e-14)


def test_labels_csv_round_trip(tmp_path):
    z = L.sample_cw(25, 0.7, make_rng(115))
    path = tmp_path / "z.csv"
    L.save_labels_csv(z, path)
    back = L.load_labels_csv(path)
    assert np.array_equal(back.values, z.values)
    assert path.read_text().splitlines()[0] == "z"


def test_sampler_rejects_negative_beta():
    with pytest.raises(L.SamplerError):
        L.sample_cw(5, -1.0, make_rng(0))
