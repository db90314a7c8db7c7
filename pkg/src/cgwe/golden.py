"""Versioned table of reference values with tolerances and provenance tags."""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

TABLE_VERSION = 1


@dataclass(frozen=True)
class Golden:
    value: float
    tol: float
    provenance: str
    units: str = "hbar^2/m"

    def check(self, x: float) -> bool:
        return abs(float(x) - self.value) <= self.tol

    def compare(self, name: str, x: float) -> dict:
        return {"name": name, "value": float(x), "golden": self.value, "tol": self.tol,
                "provenance": self.provenance, "units": self.units, "passed": self.check(x),
                "table_version": TABLE_VERSION}


CHI_TILDE_EXACT = Fraction(2**12, 3**9)

GOLDEN = {
    "chi_tilde_hydrogenic": Golden(float(CHI_TILDE_EXACT), 1e-12,
                                   "hydrogenic 1s ground state, single 2p intermediate level, closed form"),
    "chi_tilde_rounded": Golden(0.2081, 1e-4, "hydrogenic estimate quoted to four digits"),
    "mu_tilde_mean_field": Golden(-0.2919, 1e-4, "mean-field inverse mass chi~ - 1/2 from the hydrogenic estimate"),
    "m_eff_upper": Golden(1.713, 1e-3, "upper end of the effective-mass interval m <= m_eff", units="m"),
    "closed_form_d_limit": Golden(-0.5, 1e-3, "large-l limit of the closed-form d_l evaluator"),
}
