"""Finite-dimensional N-fermion model systems and their spectral dynamics.

Everything here works in internal units with hbar = m = 1.  Energies are in
units of hbar^2/(m a^2) where ``a`` is the short length (nearest-neighbour
spacing), times in m a^2/hbar.  ``UNITS`` is attached to serialized output so
downstream consumers can convert.
"""
from __future__ import annotations

import csv
import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

UNITS = {
    "hbar": 1.0,
    "mass": 1.0,
    "length": "a (short-scale spacing)",
    "energy": "hbar^2/(m a^2)",
    "time": "m a^2/hbar",
    "momentum": "hbar/a",
}

HERMITIAN_RTOL = 1e-12


class GroundStateDegeneracyWarning(UserWarning):
    pass


def hermiticity_residual(mat: np.ndarray) -> float:
    """Relative size of the anti-Hermitian part, ||M - M^H|| / max(||M||, 1)."""
    mat = np.asarray(mat)
    scale = max(np.linalg.norm(mat), 1.0)
    return float(np.linalg.norm(mat - mat.conj().T) / scale)


def _check_hermitian(name: str, mat: np.ndarray) -> None:
    if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
        raise ValueError(f"{name} must be a square matrix, got shape {mat.shape}")
    res = hermiticity_residual(mat)
    if res > HERMITIAN_RTOL:
        raise ValueError(f"{name} is not Hermitian (relative residual {res:.3e})")


@dataclass(frozen=True, eq=False)
class ModelSystem:
    """N-body model: H0, the eps^2 perturbation V2, optional V1 and momenta.

    ``momentum`` has shape (n_particles, n_components, dim, dim); entry
    ``[l, a]`` is the Hermitian matrix of p_{l a}.
    """

    n_particles: int
    h0: np.ndarray
    v2: np.ndarray
    momentum: np.ndarray
    epsilon: float
    mass: float = 1.0
    v1: np.ndarray | None = None
    units: dict = field(default_factory=lambda: dict(UNITS))

    def __post_init__(self):
        if self.n_particles < 1:
            raise ValueError("n_particles must be >= 1")
        if not 0.0 < self.epsilon < 1.0:
            raise ValueError(f"epsilon must lie in (0, 1), got {self.epsilon}")
        if self.mass <= 0:
            raise ValueError("mass must be positive")
        h0 = np.asarray(self.h0, dtype=complex)
        v2 = np.asarray(self.v2, dtype=complex)
        mom = np.asarray(self.momentum, dtype=complex)
        _check_hermitian("h0", h0)
        _check_hermitian("v2", v2)
        if v2.shape != h0.shape:
            raise ValueError("v2 and h0 shapes differ")
        if mom.ndim != 4 or mom.shape[0] != self.n_particles or mom.shape[2:] != h0.shape:
            raise ValueError(
                f"momentum must have shape ({self.n_particles}, d, {h0.shape[0]}, {h0.shape[0]})"
            )
        for l in range(mom.shape[0]):
            for a in range(mom.shape[1]):
                _check_hermitian(f"momentum[{l},{a}]", mom[l, a])
        object.__setattr__(self, "h0", h0)
        object.__setattr__(self, "v2", v2)
        object.__setattr__(self, "momentum", mom)
        if self.v1 is not None:
            v1 = np.asarray(self.v1, dtype=complex)
            _check_hermitian("v1", v1)
            object.__setattr__(self, "v1", v1)

    @property
    def dim(self) -> int:
        return self.h0.shape[0]

    @property
    def n_components(self) -> int:
        return self.momentum.shape[1]

    def to_json(self) -> str:
        doc = {
            "n_particles": self.n_particles,
            "dim": self.dim,
            "mass": self.mass,
            "epsilon": self.epsilon,
            "units": self.units,
            "h0": _matrix_to_pairs(self.h0),
            "v2": _matrix_to_pairs(self.v2),
            "v1": None if self.v1 is None else _matrix_to_pairs(self.v1),
            "momentum": [[_matrix_to_pairs(m) for m in row] for row in self.momentum],
        }
        return json.dumps(doc, indent=1)

    @classmethod
    def from_json(cls, text: str) -> "ModelSystem":
        doc = json.loads(text)
        mom = np.array([[_pairs_to_matrix(m) for m in row] for row in doc["momentum"]])
        sys_ = cls(
            n_particles=doc["n_particles"],
            h0=_pairs_to_matrix(doc["h0"]),
            v2=_pairs_to_matrix(doc["v2"]),
            v1=None if doc.get("v1") is None else _pairs_to_matrix(doc["v1"]),
            momentum=mom,
            epsilon=doc["epsilon"],
            mass=doc.get("mass", 1.0),
            units=doc.get("units", dict(UNITS)),
        )
        if sys_.dim != doc["dim"]:
            raise ValueError("dim field disagrees with matrix size")
        return sys_


def _matrix_to_pairs(mat: np.ndarray) -> list:
    # row-major list of rows of [re, im]
    return [[[float(z.real), float(z.imag)] for z in row] for row in np.asarray(mat)]


def _pairs_to_matrix(rows: list) -> np.ndarray:
    arr = np.asarray(rows, dtype=float)
    return arr[..., 0] + 1j * arr[..., 1]


@dataclass(frozen=True, eq=False)
class SpectralDecomposition:
    """Eigenpairs of H0 with the ground energy shifted to exactly zero."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    ground_shift: float
    degenerate_ground: bool = False

    @property
    def gap(self) -> float:
        return float(self.eigenvalues[1]) if len(self.eigenvalues) > 1 else np.inf

    @property
    def ground(self) -> np.ndarray:
        return self.eigenvectors[:, 0]

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["index", "eigenvalue"])
            for i, z in enumerate(self.eigenvalues):
                w.writerow([i, repr(float(z))])


def _fix_phase(vec: np.ndarray) -> np.ndarray:
    mag = np.abs(vec)
    # first component within rounding of the largest modulus is made real positive
    idx = int(np.flatnonzero(mag >= mag.max() * (1 - 1e-8))[0])
    return vec * (abs(vec[idx]) / vec[idx])


def diagonalize(system: ModelSystem | np.ndarray, degeneracy_tol: float = 1e-10) -> SpectralDecomposition:
    """Dense Hermitian eigendecomposition with ground energy shifted to zero.

    A degenerate ground level triggers a ``GroundStateDegeneracyWarning``; the
    ground vector is then the projection of the lowest basis vector with
    non-zero weight onto the degenerate subspace, so the choice is
    deterministic and basis-independent.
    """
    h0 = system.h0 if isinstance(system, ModelSystem) else np.asarray(system, dtype=complex)
    _check_hermitian("h0", h0)
    h0 = 0.5 * (h0 + h0.conj().T)
    evals, evecs = np.linalg.eigh(h0)
    shift = float(evals[0])
    evals = evals - shift
    evals[0] = 0.0
    scale = max(np.abs(evals).max(), 1.0)
    degenerate = len(evals) > 1 and evals[1] <= degeneracy_tol * scale
    if degenerate:
        warnings.warn(
            f"ground state of H0 is degenerate (zeta_1 = {evals[1]:.3e}); "
            "picking a deterministic ground vector",
            GroundStateDegeneracyWarning,
            stacklevel=2,
        )
        g = int(np.sum(evals <= degeneracy_tol * scale))
        sub = evecs[:, :g]
        for k in range(h0.shape[0]):
            v = sub @ sub[k].conj()
            if np.linalg.norm(v) > 1e-8:
                break
        v = v / np.linalg.norm(v)
        # re-orthonormalize the remaining degenerate vectors against v
        rest = sub - np.outer(v, v.conj() @ sub)
        u, _, _ = np.linalg.svd(rest, full_matrices=False)
        sub_new = np.column_stack([v, u[:, : g - 1]])
        evecs = np.column_stack([sub_new, evecs[:, g:]])
        evals[:g] = 0.0
    evecs = np.column_stack([_fix_phase(evecs[:, k]) for k in range(evecs.shape[1])])
    return SpectralDecomposition(evals, evecs, shift, bool(degenerate))


def default_eta(spectrum: SpectralDecomposition, hbar: float = 1.0) -> float:
    """Dephasing rate used when none is given: 1e-3 of the first gap frequency."""
    return 1e-3 * spectrum.gap / hbar


def _damping_rates(spectrum: SpectralDecomposition, eta: float) -> np.ndarray:
    rates = np.full(len(spectrum.eigenvalues), float(eta))
    rates[0] = 0.0
    return rates


def evolve(spectrum: SpectralDecomposition, psi: np.ndarray, t0: float, eta: float = 0.0,
           hbar: float = 1.0) -> np.ndarray:
    """Apply S(t0) = exp(-i(H0 - i eta) t0 / hbar), damping excited components only."""
    if not np.isfinite(t0):
        raise ValueError("t0 must be finite")
    if eta < 0:
        raise ValueError("eta must be non-negative")
    u = spectrum.eigenvectors
    c = u.conj().T @ np.asarray(psi, dtype=complex)
    phase = np.exp(-1j * spectrum.eigenvalues * t0 / hbar - _damping_rates(spectrum, eta) * t0)
    return u @ (phase * c)


def long_time_average(spectrum: SpectralDecomposition, omega: np.ndarray, T: float,
                      eta: float | None = None, hbar: float = 1.0) -> np.ndarray:
    """(1/T) * integral_{-T}^{0} S(-t') Omega|0> dt' in closed spectral form.

    Each excited component contributes c_n (1 - exp(-z_n T)) / (z_n T) with
    z_n = i zeta_n / hbar + eta; the ground component passes through unchanged.
    ``eta=None`` uses ``default_eta``.
    """
    if not T > 0:
        raise ValueError("T must be positive")
    if eta is None:
        eta = default_eta(spectrum, hbar)
    u = spectrum.eigenvectors
    c = u.conj().T @ (np.asarray(omega) @ u[:, 0])
    z = 1j * spectrum.eigenvalues / hbar + _damping_rates(spectrum, eta)
    factor = np.ones_like(z)
    exc = np.abs(z) > 0
    factor[exc] = -np.expm1(-z[exc] * T) / (z[exc] * T)
    return u @ (factor * c)


def expectation(psi: np.ndarray, omega: np.ndarray) -> complex:
    psi = np.asarray(psi, dtype=complex)
    nrm = np.vdot(psi, psi).real
    if nrm == 0.0:
        raise ValueError("zero-norm state")
    return complex(np.vdot(psi, np.asarray(omega) @ psi) / nrm)


def gaussian_window(x):
    return np.exp(-np.asarray(x, dtype=float) ** 2)


def split_potential(v: Callable, window: Callable, r: Sequence[float] | np.ndarray,
                    scale: float = 1.0):
    """Split a radial pair potential into v*G (short-ranged) and v*(1-G).

    ``window`` is evaluated as G(r / scale).  G must equal 1 at the origin and be
    non-increasing on the sample points.
    """
    r = np.asarray(r, dtype=float)
    if np.any(r <= 0):
        raise ValueError("potential samples must be at r > 0")
    if scale <= 0:
        raise ValueError("scale must be positive")
    g0 = float(np.asarray(window(np.array([0.0])))[0])
    if abs(g0 - 1.0) > 1e-12:
        raise ValueError(f"window must satisfy G(0) = 1, got {g0}")
    rs = np.sort(np.concatenate([[0.0], r]))
    gs = np.asarray(window(rs / scale), dtype=float)
    if np.any(np.diff(gs) > 1e-14):
        raise ValueError("window must be monotone non-increasing")
    g = np.asarray(window(r / scale), dtype=float)
    vr = np.asarray(v(r), dtype=float)
    return vr * g, vr * (1.0 - g)


def random_hermitian(dim: int, rng: np.random.Generator, real: bool = False) -> np.ndarray:
    a = rng.standard_normal((dim, dim))
    if not real:
        a = a + 1j * rng.standard_normal((dim, dim))
    return (a + a.conj().T) / (2 * np.sqrt(dim))


def random_model(dim: int, n_particles: int = 1, n_components: int = 3, seed: int = 0,
                 epsilon: float = 0.1) -> ModelSystem:
    """Random model with a real symmetric H0 and purely imaginary momenta.

    The ground vector of a real symmetric H0 can be taken real, so every
    <0|p|0> vanishes, the situation assumed for bounded systems.
    """
    rng = np.random.default_rng(seed)
    h0 = random_hermitian(dim, rng, real=True) + np.diag(np.arange(dim, dtype=float))
    v2 = random_hermitian(dim, rng, real=True)
    mom = np.empty((n_particles, n_components, dim, dim), dtype=complex)
    for l in range(n_particles):
        for a in range(n_components):
            g = rng.standard_normal((dim, dim))
            mom[l, a] = 1j * (g - g.T) / np.sqrt(2 * dim)
    return ModelSystem(n_particles=n_particles, h0=h0, v2=v2, momentum=mom, epsilon=epsilon)
