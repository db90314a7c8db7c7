"""Two-scale validation: full lattice dynamics against the coarse-grained equation.

The toy model is one particle on a periodic 1D lattice of unit period,

    H = -1/2 d^2/dr^2 + V0(r) - E0 + eps^2 V2(eps r),

with V0(r) = v0 cos(2 pi r), E0 the band bottom and V2 a slow potential in
R = eps r.  H0 is propagated exactly through its Bloch decomposition, the slow
potential by Strang splitting.  The coarse-grained envelope is extracted with a
Gaussian window Delta in R and compared against the envelope equation

    i dW/dt2 = (mu d^2/dR^2 + V2(R)) W,    t2 = eps^2 t,

with mu taken from the unit-cell effective-mass tensor.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .cgmf import CgmfOperator, Grid, GridFunction, MeanFieldProblem, make_kernel
from .effective_mass import mass_tensor
from .model_core import ModelSystem

POINTS_PER_CELL_MIN = 16


def harmonic_v2(kappa: float = 1.0) -> Callable:
    return lambda R: 0.5 * kappa * np.asarray(R) ** 2


def gaussian_envelope(center: float = 1.0, width: float = 2.0, momentum: float = 0.0) -> Callable:
    def w0(R):
        R = np.asarray(R)
        return np.exp(-0.5 * ((R - center) / width) ** 2 + 1j * momentum * R)
    return w0


@dataclass(eq=False)
class TwoScaleModel:
    """One value of eps realized on a fine periodic grid of M cells x p points."""

    epsilon: float
    v0: float
    domain_r: float              # extent of the R domain, centered at 0
    points_per_cell: int
    v2: Callable
    n_cells: int
    e0: float                    # band bottom, subtracted from H0
    psi_hat: np.ndarray          # periodic ground state on the fine grid, cell mean |psi|^2 = 1
    kinetic: np.ndarray          # (p, M) wavenumbers in Bloch-block layout
    block_vals: np.ndarray       # (M, p) shifted eigenvalues of each Bloch block
    block_vecs: np.ndarray       # (M, p, p)
    cell_h0: np.ndarray          # p x p Bloch block at q = 0 (plane-wave basis)
    cell_momentum: np.ndarray    # p x p momentum in the same basis
    v1: Callable | None = None

    @property
    def n_points(self) -> int:
        return self.n_cells * self.points_per_cell

    @property
    def r(self) -> np.ndarray:
        L = self.n_cells
        return -L / 2 + np.arange(self.n_points) / self.points_per_cell

    @property
    def coarse_grid(self) -> Grid:
        """Periodic R-grid with one point at the start of every cell."""
        return Grid((self.domain_r,), (self.n_cells,), "periodic")

    def cell_system(self) -> ModelSystem:
        p = self.points_per_cell
        return ModelSystem(1, self.cell_h0, np.zeros((p, p)), self.cell_momentum[None, None],
                           epsilon=self.epsilon)

    def mu(self) -> float:
        """Effective inverse mass mu = -1/(2 m*) from the unit-cell tensor (eta -> 0+)."""
        return float(mass_tensor(self.cell_system()).mu[0, 0, 0, 0].real)


def _cell_potential_circulant(v0: float, p: int) -> np.ndarray:
    s = np.arange(p) / p
    vt = np.fft.fft(v0 * np.cos(2 * np.pi * s)) / p
    idx = (np.arange(p)[:, None] - np.arange(p)[None, :]) % p
    return vt[idx]


def build_two_scale_model(epsilon: float, v0: float = 2.0, domain_r: float = 24.0,
                          points_per_cell: int = 16, v2: Callable | None = None,
                          v1: Callable | None = None) -> TwoScaleModel:
    """Realize the lattice model for one eps.

    The R domain [-domain_r/2, domain_r/2) holds domain_r/eps lattice cells.
    """
    if not 0 < epsilon < 0.5:
        raise ValueError("epsilon must lie in (0, 1/2)")
    p = int(points_per_cell)
    if p < POINTS_PER_CELL_MIN:
        raise ValueError(f"need at least {POINTS_PER_CELL_MIN} points per lattice period, got {p}")
    m_float = domain_r / epsilon
    m = int(round(m_float))
    if abs(m - m_float) > 1e-9 * m_float:
        raise ValueError("domain_r / epsilon must be an integer number of cells")
    if m < 4 / epsilon:
        raise ValueError(f"domain must span at least 4/eps = {4 / epsilon:.0f} periods, got {m}")
    n = m * p
    kappa = 2 * np.pi * np.fft.fftfreq(n, d=1.0 / p)
    kin = kappa.reshape(p, m)
    vcirc = _cell_potential_circulant(v0, p)
    blocks = np.zeros((m, p, p), dtype=complex)
    blocks[:] = vcirc
    blocks[:, np.arange(p), np.arange(p)] += 0.5 * kin.T ** 2
    vals, vecs = np.linalg.eigh(blocks)
    e0 = float(vals[0, 0])
    vals = vals - e0
    c = np.zeros(n, dtype=complex)
    c[np.arange(p) * m] = vecs[0, :, 0]
    psi_hat = np.fft.ifft(c)
    psi_hat = psi_hat * np.exp(-1j * np.angle(psi_hat[np.argmax(np.abs(psi_hat))]))
    psi_hat = psi_hat.real / np.sqrt(np.mean(np.abs(psi_hat) ** 2))
    return TwoScaleModel(
        epsilon=float(epsilon), v0=float(v0), domain_r=float(domain_r), points_per_cell=p,
        v2=v2 if v2 is not None else harmonic_v2(), n_cells=m, e0=e0, psi_hat=psi_hat,
        kinetic=kin, block_vals=vals, block_vecs=vecs, cell_h0=blocks[0],
        cell_momentum=np.diag(kin[:, 0]).astype(complex), v1=v1)


# --- full dynamics -------------------------------------------------------------

def _h0_step(model: TwoScaleModel, psi: np.ndarray, dt: float) -> np.ndarray:
    p, m = model.points_per_cell, model.n_cells
    c = np.fft.fft(psi).reshape(p, m).T                      # (M, p)
    u = model.block_vecs
    coef = np.einsum("qji,qj->qi", u.conj(), c)
    coef *= np.exp(-1j * model.block_vals * dt)
    c = np.einsum("qij,qj->qi", u, coef)
    return np.fft.ifft(c.T.reshape(-1))


def full_energy(model: TwoScaleModel, psi: np.ndarray, slow: np.ndarray) -> float:
    """<psi|H - E0|psi> / <psi|psi> with ``slow`` the sampled eps^2 V2 + eps V1."""
    p, m = model.points_per_cell, model.n_cells
    c = np.fft.fft(psi).reshape(p, m).T
    coef = np.einsum("qji,qj->qi", model.block_vecs.conj(), c)
    e_kin = np.sum(model.block_vals * np.abs(coef) ** 2) / model.n_points
    e_pot = np.sum(slow * np.abs(psi) ** 2)
    return float((e_kin + e_pot) / np.sum(np.abs(psi) ** 2))


def slow_potential(model: TwoScaleModel) -> np.ndarray:
    R = model.epsilon * model.r
    out = model.epsilon**2 * np.asarray(model.v2(R), dtype=float)
    if model.v1 is not None:
        out = out + model.epsilon * np.asarray(model.v1(R), dtype=float)
    return out


@dataclass
class FullRun:
    times: np.ndarray
    states: list
    norm_drift: float
    energy_drift: float
    energy_scale: float


def propagate_full(model: TwoScaleModel, psi0: np.ndarray, t_final: float, dt: float = 0.5,
                   save_times=None) -> FullRun:
    """Strang splitting: half slow-potential kick, exact H0 step, half kick."""
    nsteps = max(1, int(np.ceil(t_final / dt)))
    dt = t_final / nsteps
    slow = slow_potential(model)
    kick = np.exp(-0.5j * dt * slow)
    save = set()
    if save_times is not None:
        save = {int(round(t / dt)) for t in save_times}
    psi = np.asarray(psi0, dtype=complex).copy()
    n0 = np.sum(np.abs(psi) ** 2)
    e_init = full_energy(model, psi, slow)
    times, states = [], []
    if 0 in save:
        times.append(0.0)
        states.append(psi.copy())
    for k in range(1, nsteps + 1):
        psi = kick * _h0_step(model, kick * psi, dt)
        if k in save:
            times.append(k * dt)
            states.append(psi.copy())
    if not np.all(np.isfinite(psi)):
        raise FloatingPointError("full integration produced non-finite values")
    norm_drift = abs(np.sum(np.abs(psi) ** 2) / n0 - 1.0)
    e_final = full_energy(model, psi, slow)
    scale = abs(e_init) + abs(model.e0)
    if not save:
        times, states = [t_final], [psi]
    return FullRun(np.array(times), states, float(norm_drift), abs(e_final - e_init) / scale,
                   scale)


# --- coarse-graining -----------------------------------------------------------

@dataclass(eq=False)
class CoarseExtraction:
    w_extracted: GridFunction
    denominator_floor: float
    defined: np.ndarray          # boolean mask of R points where the ratio is defined
    kernel_width: float


def extract_coarse_wavefunction(model: TwoScaleModel, psi_full: np.ndarray, epsilon: float | None = None,
                                width: float | None = None, floor: float = 1e-8) -> CoarseExtraction:
    """Delta-window ratio int Delta(R - eps r) psi_hat* psi / int Delta(R - eps r) |psi_hat|^2.

    Delta is a normalized Gaussian of standard deviation ``width`` in R
    (default 2 eps).  Points whose denominator falls below ``floor`` (relative
    to its maximum) are set to NaN and flagged in ``defined``.
    """
    eps = model.epsilon if epsilon is None else float(epsilon)
    if abs(eps - model.epsilon) > 1e-15:
        raise ValueError("epsilon does not match the model")
    width = 2 * eps if width is None else float(width)
    if width < eps * (1 - 1e-12):
        raise ValueError(f"kernel width {width:g} is narrower than one lattice period ({eps:g} in R)")
    psi_full = np.asarray(psi_full)
    if psi_full.shape != (model.n_points,):
        raise ValueError("psi_full does not live on the model's fine grid")
    n = model.n_points
    dr = 1.0 / model.points_per_cell
    d = np.arange(n) * dr
    d = np.where(d > n * dr / 2, d - n * dr, d) * eps
    kern = np.exp(-0.5 * (d / width) ** 2)
    kf = np.fft.fft(kern)
    num = np.fft.ifft(kf * np.fft.fft(model.psi_hat.conj() * psi_full))
    den = np.fft.ifft(kf * np.fft.fft(np.abs(model.psi_hat) ** 2)).real
    idx = np.arange(model.n_cells) * model.points_per_cell
    num, den = num[idx], den[idx]
    defined = den > floor * den.max()
    w = np.full(model.n_cells, np.nan, dtype=complex)
    w[defined] = num[defined] / den[defined]
    return CoarseExtraction(_raw_gridfunction(model.coarse_grid, w), floor, defined, width)


def _raw_gridfunction(grid: Grid, values: np.ndarray) -> GridFunction:
    # GridFunction rejects NaN; undefined points are legitimate here
    gf = object.__new__(GridFunction)
    gf.grid = grid
    gf.values = np.asarray(values, dtype=complex).reshape(grid.shape)
    return gf


def initial_state(model: TwoScaleModel, w0: Callable) -> np.ndarray:
    return model.psi_hat * w0(model.epsilon * model.r)


# --- envelope reference ----------------------------------------------------------

def cgwe_reference(model: TwoScaleModel, w0: Callable, t2: float, mu: float | None = None) -> np.ndarray:
    """Exact solution of the envelope equation on the coarse R-grid at slow time t2."""
    mu = model.mu() if mu is None else mu
    grid = model.coarse_grid
    op = CgmfOperator(MeanFieldProblem(1, make_kernel("zero"), [[mu]]), grid)
    R = grid.axes()[0]
    h = op.dense(np.asarray(model.v2(R), dtype=float))
    lam, vec = np.linalg.eigh(h)
    w = w0(R)
    return vec @ (np.exp(-1j * lam * t2) * (vec.conj().T @ w))


@dataclass
class ConvergenceReport:
    epsilon: np.ndarray
    err: np.ndarray
    err_half_width: np.ndarray
    slope: float
    mu: np.ndarray
    norm_drift: np.ndarray
    energy_drift: np.ndarray
    t2: float
    width_factor: float
    err_smoothed: np.ndarray         # against the reference passed through the same window
    err_smoothed_half_width: np.ndarray
    slope_smoothed: float
    strictly_decreasing: bool = field(init=False)

    def __post_init__(self):
        self.strictly_decreasing = bool(np.all(np.diff(self.err) < 0))

    @property
    def half_width_change(self) -> np.ndarray:
        return np.abs(self.err_half_width - self.err) / self.err

    @property
    def smoothed_half_width_change(self) -> np.ndarray:
        return np.abs(self.err_smoothed_half_width - self.err_smoothed) / self.err_smoothed

    def rows(self) -> list[dict]:
        return [{"epsilon": float(e), "err": float(r), "err_half_width": float(h), "slope": self.slope}
                for e, r, h in zip(self.epsilon, self.err, self.err_half_width)]

    def to_dict(self) -> dict:
        return {"epsilon": self.epsilon.tolist(), "err": self.err.tolist(),
                "err_half_width": self.err_half_width.tolist(), "slope": self.slope,
                "mu": self.mu.tolist(), "norm_drift": self.norm_drift.tolist(),
                "energy_drift": self.energy_drift.tolist(), "t2": self.t2,
                "width_factor": self.width_factor,
                "err_smoothed": self.err_smoothed.tolist(),
                "err_smoothed_half_width": self.err_smoothed_half_width.tolist(),
                "slope_smoothed": self.slope_smoothed,
                "half_width_change": self.half_width_change.tolist(),
                "smoothed_half_width_change": self.smoothed_half_width_change.tolist(),
                "strictly_decreasing": self.strictly_decreasing}


def fit_slope(x, y) -> tuple[float, float]:
    """Least-squares slope of y against x and its standard error."""
    x, y = np.asarray(x, float), np.asarray(y, float)
    a = np.vstack([x, np.ones_like(x)]).T
    coef, res, *_ = np.linalg.lstsq(a, y, rcond=None)
    if len(x) > 2:
        resid = y - a @ coef
        s2 = resid @ resid / (len(x) - 2)
        se = float(np.sqrt(s2 / np.sum((x - x.mean()) ** 2)))
    else:
        se = float("nan")
    return float(coef[0]), se


def fine_interpolation(model: TwoScaleModel, w_coarse: np.ndarray) -> np.ndarray:
    """Trigonometric interpolation of a coarse periodic envelope onto the fine grid."""
    m, n = model.n_cells, model.n_points
    f = np.fft.fft(np.asarray(w_coarse, dtype=complex))
    pad = np.zeros(n, dtype=complex)
    half = m // 2
    pad[:half] = f[:half]
    pad[n - (m - half) + (1 if m % 2 == 0 else 0):] = f[half + (1 if m % 2 == 0 else 0):]
    if m % 2 == 0:
        # split the Nyquist coefficient so the interpolant of a real signal stays real
        pad[half] = 0.5 * f[half]
        pad[n - half] = 0.5 * f[half]
    return np.fft.ifft(pad) * (n / m)


def smoothed_reference(model: TwoScaleModel, w_ref: np.ndarray, width: float) -> np.ndarray:
    """The envelope reference passed through the same Delta window as the full state."""
    psi = model.psi_hat * fine_interpolation(model, w_ref)
    return extract_coarse_wavefunction(model, psi, model.epsilon, width).w_extracted.values


def relative_error(w_cg: np.ndarray, w_ref: np.ndarray) -> float:
    ok = np.isfinite(w_cg)
    return float(np.linalg.norm(w_cg[ok] - w_ref[ok]) / np.linalg.norm(w_ref[ok]))


def run_epsilon(epsilon: float, t2: float = 1.0, v0: float = 2.0, domain_r: float = 24.0,
                points_per_cell: int = 16, v2: Callable | None = None, w0: Callable | None = None,
                width_factor: float = 2.0, dt: float = 0.5) -> dict:
    """Full and envelope dynamics for one eps; errors at the given and the halved Delta width."""
    w0 = w0 if w0 is not None else gaussian_envelope()
    model = build_two_scale_model(epsilon, v0, domain_r, points_per_cell, v2)
    mu = model.mu()
    run = propagate_full(model, initial_state(model, w0), t2 / epsilon**2, dt)
    ref = cgwe_reference(model, w0, t2, mu)
    psi = run.states[-1]
    width = width_factor * epsilon
    half = max(width_factor / 2, 1.0) * epsilon
    cg = extract_coarse_wavefunction(model, psi, epsilon, width).w_extracted.values
    cg_half = extract_coarse_wavefunction(model, psi, epsilon, half).w_extracted.values
    return {"epsilon": float(epsilon), "err": relative_error(cg, ref),
            "err_half_width": relative_error(cg_half, ref),
            "err_smoothed": relative_error(cg, smoothed_reference(model, ref, width)),
            "err_smoothed_half_width": relative_error(cg_half, smoothed_reference(model, ref, half)),
            "mu": mu, "norm_drift": run.norm_drift, "energy_drift": run.energy_drift}


def compare_full_vs_cgwe(epsilons=(1 / 8, 1 / 16, 1 / 32), t2: float = 1.0, v0: float = 2.0,
                         domain_r: float = 24.0, points_per_cell: int = 16,
                         v2: Callable | None = None, w0: Callable | None = None,
                         width_factor: float = 2.0, dt: float = 0.5, mapper=map) -> ConvergenceReport:
    """Run full and envelope dynamics for each eps and report err(eps).

    err = ||Psi_CG(T2/eps^2) - W(T2)|| / ||W(T2)|| on the coarse grid; the
    half-width column repeats the extraction with the Delta width halved.  The
    smoothed columns compare against W(T2) passed through the same window, which
    removes the O(width^2) smoothing bias from the comparison.
    ``mapper`` may fan the independent eps-runs out over workers.
    """
    eps = np.asarray(epsilons, dtype=float)
    if np.any(np.diff(eps) >= 0):
        raise ValueError("epsilon list must be strictly decreasing")
    kw = dict(t2=t2, v0=v0, domain_r=domain_r, points_per_cell=points_per_cell, v2=v2, w0=w0,
              width_factor=width_factor, dt=dt)
    runs = list(mapper(_EpsilonRunner(kw), eps.tolist()))
    col = lambda k: np.array([r[k] for r in runs])
    slope, _ = fit_slope(np.log(eps), np.log(col("err")))
    slope_s, _ = fit_slope(np.log(eps), np.log(col("err_smoothed")))
    return ConvergenceReport(eps, col("err"), col("err_half_width"), slope, col("mu"),
                             col("norm_drift"), col("energy_drift"), t2, width_factor,
                             col("err_smoothed"), col("err_smoothed_half_width"), slope_s)


class _EpsilonRunner:
    """Picklable closure over the shared run parameters."""

    def __init__(self, kw: dict):
        self.kw = kw

    def __call__(self, epsilon: float) -> dict:
        return run_epsilon(epsilon, **self.kw)


# --- envelope expectation ----------------------------------------------------------

@dataclass
class EnvelopeExpectation:
    total: complex
    lattice_term: complex        # -i int psi_hat* W* (d psi_hat / dr) W
    envelope_term: complex       # -i eps int |psi_hat|^2 W* dW/dR
    norm: float                  # int |psi_hat W(eps r)|^2 dr, used to normalize


def envelope_expectation(model: TwoScaleModel, psi_hat: np.ndarray, w: np.ndarray,
                         epsilon: float | None = None, operator: str = "momentum") -> EnvelopeExpectation:
    """Two-term momentum expectation of psi_hat(r) W(eps r) on the fine grid.

    ``w`` is W sampled at R = eps r on the fine grid.  Both terms are divided
    by the reported norm.
    """
    if operator != "momentum":
        raise ValueError("only the momentum operator is supported")
    eps = model.epsilon if epsilon is None else float(epsilon)
    psi_hat = np.asarray(psi_hat, dtype=complex)
    w = np.asarray(w, dtype=complex)
    if psi_hat.shape != (model.n_points,) or w.shape != psi_hat.shape:
        raise ValueError("psi_hat and w must both live on the model's fine grid")
    k = 2 * np.pi * np.fft.fftfreq(model.n_points, d=1.0 / model.points_per_cell)
    dpsi = np.fft.ifft(1j * k * np.fft.fft(psi_hat))
    # dW/dR = (1/eps) dW/dr
    dw = np.fft.ifft(1j * k * np.fft.fft(w)) / eps
    dr = 1.0 / model.points_per_cell
    norm = float(np.sum(np.abs(psi_hat * w) ** 2) * dr)
    lat = -1j * np.sum(psi_hat.conj() * w.conj() * dpsi * w) * dr / norm
    env = -1j * eps * np.sum(np.abs(psi_hat) ** 2 * w.conj() * dw) * dr / norm
    return EnvelopeExpectation(complex(lat + env), complex(lat), complex(env), norm)


# --- V1 diagnostic ---------------------------------------------------------------

@dataclass
class GrowthReport:
    t1: np.ndarray
    gradient_norm: np.ndarray    # ||d Psi_CG / dR|| / ||Psi_CG||
    slope: float                 # late-time growth rate (second half of the run)
    slope_stderr: float
    ratio: float                 # final / initial gradient norm
    amplitude: float

    @property
    def growing(self) -> bool:
        return self.slope > 3 * self.slope_stderr and self.slope > 0

    @property
    def statistically_zero(self) -> bool:
        return abs(self.slope) < 3 * self.slope_stderr or abs(self.slope) < 1e-12


def coarse_gradient_norm(w: np.ndarray, grid: Grid) -> float:
    k = grid.wavenumbers()[0]
    dw = np.fft.ifft(1j * k * np.fft.fft(w))
    return float(np.linalg.norm(dw) / np.linalg.norm(w))


def v1_gradient_growth_diagnostic(epsilon: float = 1 / 32, amplitude: float = 0.25,
                                  t1_final: float = 16.0, n_samples: int = 33, v0: float = 2.0,
                                  domain_r: float = 24.0, points_per_cell: int = 16,
                                  w0: Callable | None = None, dt: float = 0.5) -> GrowthReport:
    """Gradient of the extracted envelope under an order-eps potential V1(R) = a R.

    The phase exp(-i a R t1) makes ||dPsi_CG/dR|| grow like a t1 at late
    times; for a = 0 it stays bounded.  Times are on the t1 = eps t clock.
    """
    w0 = w0 if w0 is not None else gaussian_envelope(center=0.0, width=2.0)
    v1 = (lambda R: amplitude * np.asarray(R)) if amplitude != 0 else None
    model = build_two_scale_model(epsilon, v0, domain_r, points_per_cell,
                                  v2=lambda R: np.zeros_like(np.asarray(R, dtype=float)), v1=v1)
    t1 = np.linspace(0.0, t1_final, n_samples)
    t_full = t1 / epsilon
    step = t_full[1] / max(1, int(np.ceil(t_full[1] / dt)))
    run = propagate_full(model, initial_state(model, w0), t_full[-1], step, save_times=t_full)
    grid = model.coarse_grid
    norms = np.array([coarse_gradient_norm(
        extract_coarse_wavefunction(model, s).w_extracted.values, grid) for s in run.states])
    half = len(t1) // 2
    slope, se = fit_slope(t1[half:], norms[half:])
    return GrowthReport(t1, norms, slope, se, float(norms[-1] / norms[0]), amplitude)


# --- two-fermion cell ---------------------------------------------------------------

@dataclass
class TwoFermionCell:
    energy: float                # e0 + e1 of the Slater ground state
    slater: np.ndarray           # p x p coefficient matrix in the plane-wave basis
    dense_energy: float          # lowest antisymmetric eigenvalue of the dense 2-body matrix
    overlap: float               # |<dense ground|Slater>|
    chi_antisymmetric: float     # sum over antisymmetric intermediate states
    chi_symmetric: float         # sum over symmetric intermediate states (zeta may be < 0)
    chi_11: float                # chi~ for equal labels: antisym + sym
    chi_12: float                # chi~ for distinct labels: antisym - sym


def _sector_basis(p: int, sign: int) -> np.ndarray:
    """Orthonormal basis of the exchange-symmetric (+1) or antisymmetric (-1) pair space."""
    cols = []
    for a in range(p):
        for b in range(a, p):
            v = np.zeros((p, p))
            v[a, b] += 1.0
            v[b, a] += sign
            nrm = np.linalg.norm(v)
            if nrm > 0:
                cols.append(v.ravel() / nrm)
    return np.array(cols).T


def two_fermion_cell(model: TwoScaleModel, zero_tol: float = 1e-9) -> TwoFermionCell:
    """Two non-interacting fermions in one cell (q = 0): Slater ground state and
    the sector-resolved momentum-correlation sums for the label-resolved tensor.

    p1 applied to the antisymmetric ground state has an antisymmetric part a and a
    symmetric part s; chi~_11 = <a|R|a> + <s|R|s> and chi~_12 = <a|R|a> - <s|R|s>
    with R the reduced resolvent of the pair Hamiltonian.
    """
    h = model.cell_h0
    p = h.shape[0]
    e, phi = np.linalg.eigh(h)
    slater = (np.outer(phi[:, 0], phi[:, 1]) - np.outer(phi[:, 1], phi[:, 0])) / np.sqrt(2)
    ground = slater.ravel()
    eye = np.eye(p)
    h2 = np.kron(h, eye) + np.kron(eye, h)
    p1 = np.kron(model.cell_momentum, eye)
    e_ground = float(e[0] + e[1])
    chi = {}
    dense_e = overlap = None
    for sign in (-1, 1):
        basis = _sector_basis(p, sign)
        lam, vec = np.linalg.eigh(basis.conj().T @ h2 @ basis)
        states = basis @ vec
        if sign == -1:
            dense_e = float(lam[0])
            overlap = float(abs(np.vdot(states[:, 0], ground)))
        amp2 = np.abs(states.conj().T @ (p1 @ ground)) ** 2
        zeta = lam - e_ground
        if sign == -1:
            amp2, zeta = amp2[1:], zeta[1:]
        coupled = amp2 > 1e-24
        if np.any(np.abs(zeta[coupled]) < zero_tol):
            raise ValueError("momentum couples the ground state to a degenerate state")
        chi[sign] = float(np.sum(amp2[coupled] / zeta[coupled]))
    return TwoFermionCell(e_ground, slater, dense_e, overlap, chi[-1], chi[1],
                          chi[-1] + chi[1], chi[-1] - chi[1])
