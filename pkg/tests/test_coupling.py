import math

import numpy as np
import pytest

from isingmix.coupling import (
    CouplingError,
    CouplingMatrix,
    check_conditions,
    load_coupling_csv,
    make_complete,
    make_matching,
    normalize_rowsum,
    save_coupling_csv,
)


def test_complete_small_entries():
    c = make_complete(3)
    assert c.entries[0, 1] == pytest.approx(1 / 3, abs=0)
    assert np.all(np.diag(c.entries) == 0)
    assert c.alpha_n == pytest.approx(2 / 9, abs=1e-16)

    c2 = make_complete(2)
    assert c2.entries[0, 1] == 0.5
    assert np.all(c2.row_sums == 0.5)


@pytest.mark.parametrize("n", [2, 3, 10, 57, 100])
def test_complete_alpha_formula(n):
    # alpha_n of the complete graph is (n-1)/n^2 exactly
    assert make_complete(n).alpha_n == pytest.approx((n - 1) / n**2, rel=1e-15)


def test_complete_mean_field_stat_n100():
    rep = check_conditions(make_complete(100))
    oracle = (99 / 10000) * math.sqrt(100 * math.log(100))
    assert rep.mean_field_stat == pytest.approx(oracle, rel=1e-12)
    assert rep.mean_field_stat == pytest.approx(0.213, abs=5e-3)
    assert rep.mean_field


def test_matching_structure():
    c = make_matching(4)
    expected = np.zeros((4, 4))
    expected[0, 1] = expected[1, 0] = 1.0
    expected[2, 3] = expected[3, 2] = 1.0
    assert np.array_equal(c.entries, expected)
    assert c.alpha_n == 1.0
    assert np.all(c.row_sums == 1.0)  # exactly regular


def test_matching_fails_mean_field():
    rep = check_conditions(make_matching(10))
    assert rep.mean_field_stat == pytest.approx(math.sqrt(10 * math.log(10)), rel=1e-12)
    assert rep.mean_field_stat == pytest.approx(4.8, abs=0.01)
    assert not rep.mean_field
    rep1000 = check_conditions(make_matching(1000))
    assert not rep1000.mean_field
    assert rep1000.approx_regular
    assert not rep1000.well_connected  # lambda2 == lambda1 == 1


def test_size_errors():
    with pytest.raises(CouplingError):
        make_complete(1)
    with pytest.raises(CouplingError):
        make_matching(5)
    with pytest.raises(CouplingError):
        make_matching(0)


def test_entry_validation():
    bad = np.ones((3, 3))
    with pytest.raises(CouplingError):
        CouplingMatrix(n=3, entries=bad)  # nonzero diagonal
    asym = np.zeros((3, 3))
    asym[0, 1] = 1.0
    with pytest.raises(CouplingError):
        CouplingMatrix(n=3, entries=asym)
    neg = np.zeros((3, 3))
    neg[0, 1] = neg[1, 0] = -1.0
    with pytest.raises(CouplingError):
        CouplingMatrix(n=3, entries=neg)


def _random_coupling(n, seed, density=0.3):
    rng = np.random.default_rng(seed)
    a = rng.random((n, n)) * (rng.random((n, n)) < density)
    a = np.triu(a, k=1)
    a = a + a.T
    return CouplingMatrix(n=n, entries=a)


def test_normalize_rowsum_idempotent():
    c = _random_coupling(40, seed=1)
    c1 = normalize_rowsum(c)
    c2 = normalize_rowsum(c1)
    assert np.max(c1.row_sums) == pytest.approx(1.0, abs=1e-12)
    assert np.max(np.abs(c1.entries - c2.entries)) <= 1e-15


def test_normalize_zero_matrix_errors():
    with pytest.raises(CouplingError):
        normalize_rowsum(CouplingMatrix(n=4, entries=np.zeros((4, 4))))


def test_eigenvalues_vs_dense_oracle():
    for seed in (0, 1, 2):
        c = _random_coupling(50, seed=seed)
        ref = np.sort(np.linalg.eigvalsh(c.entries))
        assert c.lambda1 == pytest.approx(ref[-1], abs=1e-8)
        assert c.lambda2 == pytest.approx(ref[-2], abs=1e-8)


def test_eigenvalues_complete_structure():
    # rank-1 + diagonal structure: lambda1 = (n-1)/n, lambda2 = -1/n
    n = 1000
    c = make_complete(n)
    assert c.lambda1 == pytest.approx((n - 1) / n, abs=1e-9)
    assert c.lambda2 == pytest.approx(-1 / n, abs=1e-9)
    rep = check_conditions(c)
    assert rep.eig_ratio == pytest.approx(-1 / (n - 1), abs=1e-8)
    assert rep.mean_field and rep.approx_regular and rep.well_connected


def test_eigenvalues_matching_degenerate():
    c = make_matching(8)
    assert c.lambda1 == pytest.approx(1.0, abs=1e-9)
    assert c.lambda2 == pytest.approx(1.0, abs=1e-9)


def test_zero_matrix_report():
    rep = check_conditions(CouplingMatrix(n=5, entries=np.zeros((5, 5))))
    assert rep.mean_field_stat == 0.0
    assert rep.mean_field
    assert not rep.well_connected
    assert math.isnan(rep.eig_ratio)


def test_csv_round_trip(tmp_path):
    c = _random_coupling(20, seed=7)
    path = tmp_path / "coupling.csv"
    save_coupling_csv(c, path)
    back = load_coupling_csv(path)
    assert back.n == c.n
    assert np.array_equal(back.entries, c.entries)
    assert back.alpha_n == c.alpha_n


def test_csv_header_required(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("i,j,value\n0,1,0.5\n")
    with pytest.raises(CouplingError):
        load_coupling_csv(path)


def test_constructor_invariants_exact():
    for maker, n in ((make_complete, 17), (make_matching, 12)):
        c = maker(n)
        assert np.array_equal(c.entries, c.entries.T)
        assert np.all(np.diag(c.entries) == 0)
        assert np.all(c.entries >= 0)
        assert c.alpha_n == np.max(np.sum(c.entries**2, axis=1))
