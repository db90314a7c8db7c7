"""Momentum correlation functions and the effective inverse-mass tensor.

The correlation function of two momentum components in the ground state,

    chi_{l a l' a'}(t0) = sum_{n>=1} <0|p_{la}|n><n|p_{l'a'}|0> exp(i w_n t0),
    w_n = zeta_n / hbar - i eta,

is integrated over t0 in (-inf, 0] to give the mass correction
chi~ = (i hbar / m^2) * integral, and the inverse-mass tensor
mu = -(hbar^2 / 2m) delta delta + chi~.
"""
from __future__ import annotations

import csv
import json
import warnings
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path

import numpy as np

from .model_core import ModelSystem, SpectralDecomposition, diagonalize

BARE = 0.5  # hbar^2 / 2m in internal units


def momentum_elements(system: ModelSystem, spectrum: SpectralDecomposition) -> np.ndarray:
    """Array ``E[l, a, n] = <0|p_{la}|n>``."""
    u = spectrum.eigenvectors
    g = u[:, 0].conj()
    return np.einsum("i,laij,jn->lan", g, system.momentum, u)


def ground_momentum(system: ModelSystem, spectrum: SpectralDecomposition) -> np.ndarray:
    """<0|p_{la}|0> for every particle/component."""
    return momentum_elements(system, spectrum)[:, :, 0]


def _check_indices(system: ModelSystem, indices) -> tuple[int, int, int, int]:
    l, a, lp, ap = (int(i) for i in indices)
    n, d = system.n_particles, system.n_components
    if not (0 <= l < n and 0 <= lp < n and 0 <= a < d and 0 <= ap < d):
        raise IndexError(f"indices {indices} out of range for N={n}, d={d}")
    return l, a, lp, ap


def correlation_chi(system: ModelSystem, spectrum: SpectralDecomposition, indices, t0,
                    eta: float = 0.0, hbar: float = 1.0):
    """chi_{l a l' a'}(t0) as a sum over excited states (n = 0 excluded).

    ``t0`` may be a scalar or an array; t0 <= 0 is the convention under which
    the dephasing factor decays.
    """
    l, a, lp, ap = _check_indices(system, indices)
    el = momentum_elements(system, spectrum)
    weights = el[l, a, 1:] * el[lp, ap, 1:].conj()
    w = spectrum.eigenvalues[1:] / hbar - 1j * eta
    t = np.asarray(t0, dtype=float)
    out = np.exp(1j * np.multiply.outer(t, w)) @ weights
    return complex(out) if out.ndim == 0 else out


def _spectral_integral(zeta: np.ndarray, elements: np.ndarray, eta: float | None,
                       hbar: float) -> np.ndarray:
    """-i sum_n E_n E_n'^* / w_n over n >= 1; eta=None is the eta -> 0+ limit."""
    z = zeta[1:]
    el = elements[:, :, 1:]
    if eta is None:
        keep = z > 1e-12 * max(1.0, float(np.abs(zeta).max()))
        if not np.all(keep):
            warnings.warn("dropping zero-energy excited states from the eta -> 0 limit",
                          stacklevel=3)
        w = (z[keep] / hbar).astype(complex)
        el = el[:, :, keep]
    else:
        w = z / hbar - 1j * eta
    # deterministic reduction order over n: plain einsum over the last axis
    return -1j * np.einsum("lan,kbn,n->lakb", el, el.conj(), 1.0 / w)


def chi_time_integral(system: ModelSystem, spectrum: SpectralDecomposition, eta: float,
                      hbar: float = 1.0) -> np.ndarray:
    """Closed-form integral over t0 in (-inf, 0] of chi, rank 4 (l, a, l', a')."""
    if not eta > 0:
        raise ValueError("eta must be positive")
    return _spectral_integral(spectrum.eigenvalues, momentum_elements(system, spectrum), eta, hbar)


def chi_time_integral_limit(system: ModelSystem, spectrum: SpectralDecomposition,
                            hbar: float = 1.0) -> np.ndarray:
    """The eta -> 0+ limit of ``chi_time_integral``."""
    return _spectral_integral(spectrum.eigenvalues, momentum_elements(system, spectrum), None, hbar)


def hermitian_form(integral: np.ndarray) -> np.ndarray:
    """Reshape i * integral into an (N d) x (N d) matrix."""
    n, d = integral.shape[:2]
    return (1j * integral).reshape(n * d, n * d)


@dataclass(frozen=True, eq=False)
class EffectiveMassTensor:
    chi_full: np.ndarray        # chi~_{l a l' a'}
    mu: np.ndarray              # mu_{l a l' a'}
    chi_tilde: np.ndarray | None  # chi~_{a a'} when label independent
    label_independent: bool
    eta: float | None
    mass: float = 1.0
    k_matrix: np.ndarray | None = None
    q_transform: np.ndarray | None = None
    d_spectrum: np.ndarray | None = None

    @property
    def mu_tilde(self) -> np.ndarray | None:
        if self.chi_tilde is None:
            return None
        d = self.chi_tilde.shape[0]
        return -BARE / self.mass * np.eye(d) + self.chi_tilde

    def entries(self, which: str = "mu"):
        arr = self.mu if which == "mu" else self.chi_full
        for idx in np.ndindex(arr.shape):
            yield idx, complex(arr[idx])

    def to_json(self) -> str:
        doc = {
            "eta": self.eta,
            "label_independent": self.label_independent,
            "mu": [{"l": i[0], "a": i[1], "lp": i[2], "ap": i[3], "re": z.real, "im": z.imag}
                   for i, z in self.entries("mu")],
            "chi_tilde": None if self.chi_tilde is None
            else [[[z.real, z.imag] for z in row] for row in self.chi_tilde],
        }
        if self.d_spectrum is not None:
            doc["d_spectrum"] = [float(x) for x in self.d_spectrum]
        return json.dumps(doc, indent=1)

    def to_csv(self, path: str | Path, which: str = "mu") -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["l", "a", "lp", "ap", "re", "im"])
            for i, z in self.entries(which):
                w.writerow([*i, repr(z.real), repr(z.imag)])


def label_independent(elements: np.ndarray, tol: float = 1e-10) -> bool:
    """True when <0|p_{la}|n> does not depend on the particle label l."""
    scale = max(np.abs(elements).max(), 1e-300)
    return bool(np.all(np.abs(elements - elements[:1]) <= tol * scale))


def tensor_from_elements(zeta: np.ndarray, elements: np.ndarray, eta: float | None = None,
                         mass: float = 1.0, hbar: float = 1.0) -> EffectiveMassTensor:
    """Assemble chi~ and mu from excitation energies and <0|p_{la}|n>."""
    integral = _spectral_integral(np.asarray(zeta, dtype=float), elements, eta, hbar)
    chi_full = 1j * hbar / mass**2 * integral
    n, d = elements.shape[:2]
    mu = chi_full.copy()
    for l in range(n):
        for a in range(d):
            mu[l, a, l, a] -= BARE * hbar**2 / mass
    indep = label_independent(elements)
    chi_t = chi_full[0, :, 0, :].copy() if indep else None
    kw = {}
    if chi_t is not None and n >= 2:
        off = chi_t - np.diag(np.diag(chi_t))
        iso = np.allclose(np.diag(chi_t), chi_t[0, 0], atol=1e-12) and np.abs(off).max() <= 1e-12
        if iso and abs(chi_t[0, 0].imag) <= 1e-12:
            km = k_matrix_and_spectrum(n, float(chi_t[0, 0].real) / (hbar**2 / mass))
            kw = dict(k_matrix=km.k, q_transform=km.q, d_spectrum=km.d)
    return EffectiveMassTensor(chi_full, mu, chi_t, indep, eta, mass, **kw)


def mass_tensor(system: ModelSystem, spectrum: SpectralDecomposition | None = None,
                eta: float | None = None, hbar: float = 1.0,
                ground_tol: float = 1e-10) -> EffectiveMassTensor:
    """Effective inverse-mass tensor of a model; ``eta=None`` takes eta -> 0+."""
    if spectrum is None:
        spectrum = diagonalize(system)
    if spectrum.degenerate_ground:
        warnings.warn("mass tensor computed on a degenerate ground state", stacklevel=2)
    el = momentum_elements(system, spectrum)
    p0 = np.abs(el[:, :, 0]).max()
    if p0 > ground_tol * max(1.0, np.abs(el).max()):
        raise ValueError(f"<0|p|0> does not vanish (max {p0:.3e})")
    if eta is not None and not eta > 0:
        raise ValueError("eta must be positive (or None for the eta -> 0 limit)")
    return tensor_from_elements(spectrum.eigenvalues, el, eta, system.mass, hbar)


@dataclass
class EtaSweep:
    etas: np.ndarray
    chi: np.ndarray          # chi_full at each eta
    chi_limit: np.ndarray
    errors: np.ndarray
    order: float             # fitted slope of log(error) vs log(eta)


def eta_sweep(system: ModelSystem, spectrum: SpectralDecomposition | None = None,
              factors=(1e-2, 1e-3, 1e-4), hbar: float = 1.0) -> EtaSweep:
    """chi~ at several eta = factor * zeta_1 / hbar and its distance to the limit."""
    if spectrum is None:
        spectrum = diagonalize(system)
    etas = np.asarray(factors, dtype=float) * spectrum.gap / hbar
    lim = mass_tensor(system, spectrum, None, hbar).chi_full
    chis = np.array([mass_tensor(system, spectrum, e, hbar).chi_full for e in etas])
    errs = np.array([np.linalg.norm(c - lim) for c in chis])
    order = float(np.polyfit(np.log(etas), np.log(errs), 1)[0])
    return EtaSweep(etas, chis, lim, errs, order)


# --- hydrogenic estimate -----------------------------------------------------

def hydrogen_dipole_sq(n: int) -> Fraction:
    """|<1s|z|np>|^2 / a^2 in closed form (exact rational)."""
    if n < 2:
        raise ValueError("np states start at n = 2")
    return Fraction(2**8 * n**7, 3 * (n + 1) ** (2 * n + 5)) * Fraction(n - 1) ** (2 * n - 5)


def hydrogen_gap(n: int) -> Fraction:
    """E_np - E_1s in units of hbar^2 / (m a^2)."""
    return Fraction(1, 2) * (1 - Fraction(1, n * n))


def hydrogen_momentum_sq(n: int) -> Fraction:
    """|<1s|p_z|np>|^2 from <1s|p|np> = i (m/hbar)(E_1s - E_np) <1s|z|np>."""
    return hydrogen_gap(n) ** 2 * hydrogen_dipole_sq(n)


def hydrogenic_chi_scalar(n_max: int = 2) -> Fraction:
    """chi~ in units hbar^2/m from the 2p..n_max p manifolds, exactly.

    Each np level contributes |<1s|p_z|np>|^2 / zeta_n.  ``n_max = 2`` is the
    three-state estimate; larger values quantify the truncation.
    """
    return sum((hydrogen_momentum_sq(n) / hydrogen_gap(n) for n in range(2, n_max + 1)),
               Fraction(0))


def hydrogenic_chi_tilde(n_max: int = 2) -> np.ndarray:
    """3 x 3 chi~ (units hbar^2/m); isotropic by the symmetry of the p orbitals."""
    return float(hydrogenic_chi_scalar(n_max)) * np.eye(3)


CHI_HYDROGENIC = float(Fraction(2**12, 3**9))


# --- K matrix ----------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class KMatrixResult:
    k: np.ndarray            # K_{l l'} in hbar^2/m
    q: np.ndarray            # rows are eigenvectors: Q K Q^T = D
    d: np.ndarray            # ascending diagonal of D
    mu_mean_field: float     # chi - 1/2
    m_eff: float             # in units of m
    closed_form_d: np.ndarray      # verbatim closed-form d_l values, l = 1..N

    @property
    def m_eff_interval(self) -> tuple[float, float]:
        return (1.0, self.m_eff)


def closed_form_d_values(n_particles: int) -> np.ndarray:
    """The closed form printed for d_l, evaluated as written (units hbar^2/m).

    It does not coincide with the orthogonal spectrum of K for l >= 2; it is
    kept for side-by-side reporting only.
    """
    out = np.empty(n_particles)
    for ell in range(1, n_particles + 1):
        if ell == 1:
            out[0] = -0.2919
        else:
            num = 0.08521 - 0.06074 * (ell - 2) - 0.04331 * (ell - 1)
            out[ell - 1] = num / (-0.2919 + 0.2081 * (ell - 2))
    return out


def closed_form_d_limit() -> float:
    return -(0.06074 + 0.04331) / 0.2081


def k_matrix_and_spectrum(n_particles: int, chi_scalar: float = CHI_HYDROGENIC) -> KMatrixResult:
    """K = (chi - 1/2 delta) hbar^2/m and its orthogonal diagonalization."""
    if n_particles < 2:
        raise ValueError("K matrix needs N >= 2")
    k = chi_scalar * np.ones((n_particles, n_particles)) - BARE * np.eye(n_particles)
    d, v = np.linalg.eigh(k)
    q = v.T
    mu_mf = chi_scalar - BARE
    # m_eff = -1 / (2 mu): negative for an inverted band, infinite when mu vanishes
    m_eff = -0.5 / mu_mf if mu_mf != 0 else float("inf")
    return KMatrixResult(k, q, d, mu_mf, m_eff, closed_form_d_values(n_particles))
