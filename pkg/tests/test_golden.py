from fractions import Fraction

import pytest

from cgwe.effective_mass import hydrogenic_chi_scalar, k_matrix_and_spectrum
from cgwe.golden import CHI_TILDE_EXACT, GOLDEN, TABLE_VERSION, Golden

from oracles import hydrogen_chi_symbolic


def test_table_entries_have_provenance_and_positive_tolerance():
    assert TABLE_VERSION >= 1
    for name, g in GOLDEN.items():
        assert g.provenance.strip(), name
        assert g.tol > 0, name


def test_exact_fraction_is_independent_of_package_closed_form():
    assert CHI_TILDE_EXACT == Fraction(4096, 19683)
    assert Fraction(str(hydrogen_chi_symbolic())) == CHI_TILDE_EXACT
    assert hydrogenic_chi_scalar(2) == CHI_TILDE_EXACT


def test_quoted_values_are_consistent_roundings():
    assert round(float(CHI_TILDE_EXACT), 4) == GOLDEN["chi_tilde_rounded"].value
    assert GOLDEN["mu_tilde_mean_field"].value == pytest.approx(GOLDEN["chi_tilde_rounded"].value - 0.5)
    # m_eff = m / (2 |mu|) with the quoted mean-field mu
    assert round(1 / (2 * 0.2919), 3) == GOLDEN["m_eff_upper"].value


def test_package_values_pass_the_table():
    km = k_matrix_and_spectrum(10)
    assert GOLDEN["chi_tilde_hydrogenic"].check(float(hydrogenic_chi_scalar(2)))
    assert GOLDEN["mu_tilde_mean_field"].check(km.mu_mean_field)
    assert GOLDEN["m_eff_upper"].check(km.m_eff)


def test_compare_reports_failure_with_provenance():
    g = Golden(1.0, 1e-3, "test entry")
    ok, bad = g.compare("x", 1.0005), g.compare("x", 1.01)
    assert ok["passed"] and not bad["passed"]
    assert bad["provenance"] == "test entry" and bad["table_version"] == TABLE_VERSION
