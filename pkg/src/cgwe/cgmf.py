"""Coarse-grained mean-field (CGMF) condensate, excitations and propagation.

Single-particle functions live on a uniform grid in the scaled coordinate R.
The linear operator that all solvers share is

    H[Q] f = Q(R) f + sum_{a a'} mu~_{a a'} d^2 f / dR_a dR_a'

with Q the Hartree field of the condensate.  Units: hbar = m = 1, so mu~ is in
hbar^2/m and the bare value is -1/2.
"""
from __future__ import annotations

import csv
import struct
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.signal import fftconvolve

BOUNDARIES = ("box", "periodic")


@dataclass(frozen=True)
class Grid:
    """Uniform grid on [-L/2, L/2] per axis.

    ``box`` grids hold interior points only (Dirichlet walls at +-L/2, spacing
    L/(n+1)); ``periodic`` grids have spacing L/n.
    """

    extents: tuple
    points: tuple
    boundary: str = "box"

    def __post_init__(self):
        ext = tuple(float(e) for e in np.atleast_1d(self.extents))
        pts = tuple(int(p) for p in np.atleast_1d(self.points))
        object.__setattr__(self, "extents", ext)
        object.__setattr__(self, "points", pts)
        if len(ext) != len(pts) or not 1 <= len(pts) <= 3:
            raise ValueError("extents and points must have the same length 1..3")
        if min(pts) < 8:
            raise ValueError("need at least 8 points per axis")
        if min(ext) <= 0:
            raise ValueError("extents must be positive")
        if self.boundary not in BOUNDARIES:
            raise ValueError(f"boundary must be one of {BOUNDARIES}")

    @property
    def dim(self) -> int:
        return len(self.points)

    @property
    def shape(self) -> tuple:
        return self.points

    @property
    def size(self) -> int:
        return int(np.prod(self.points))

    @property
    def spacing(self) -> tuple:
        if self.boundary == "box":
            return tuple(L / (n + 1) for L, n in zip(self.extents, self.points))
        return tuple(L / n for L, n in zip(self.extents, self.points))

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    def axes(self) -> list[np.ndarray]:
        off = 1 if self.boundary == "box" else 0
        return [-L / 2 + (np.arange(n) + off) * h
                for L, n, h in zip(self.extents, self.points, self.spacing)]

    def mesh(self) -> list[np.ndarray]:
        return np.meshgrid(*self.axes(), indexing="ij")

    def wavenumbers(self) -> list[np.ndarray]:
        return [2 * np.pi * np.fft.fftfreq(n, d=h) for n, h in zip(self.points, self.spacing)]

    def to_dict(self) -> dict:
        return {"extents": list(self.extents), "points": list(self.points),
                "boundary": self.boundary}


@dataclass(eq=False)
class GridFunction:
    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=complex).reshape(self.grid.shape)
        if not np.all(np.isfinite(self.values)):
            raise ValueError("grid function has non-finite values")

    @property
    def norm(self) -> float:
        return float(np.sqrt(np.sum(np.abs(self.values) ** 2) * self.grid.cell_volume))

    def inner(self, other: "GridFunction") -> complex:
        return complex(np.vdot(self.values, other.values) * self.grid.cell_volume)

    def normalized(self) -> "GridFunction":
        n = self.norm
        if n == 0:
            raise ValueError("cannot normalize a zero function")
        return GridFunction(self.grid, self.values / n)

    def copy(self) -> "GridFunction":
        return GridFunction(self.grid, self.values.copy())


# --- pair kernels ------------------------------------------------------------

@dataclass(frozen=True)
class PairKernel:
    """Translation-invariant pair potential v(R - R') addressed by name."""

    name: str
    params: dict = field(default_factory=dict)

    def __call__(self, r2: np.ndarray) -> np.ndarray:
        p = self.params
        if self.name == "zero":
            return np.zeros_like(r2)
        if self.name == "constant":
            return np.full_like(r2, float(p["value"]))
        if self.name == "gaussian":
            return float(p["strength"]) * np.exp(-r2 / float(p["range"]) ** 2)
        if self.name == "harmonic":
            return 0.5 * float(p["k"]) * r2
        raise ValueError(f"unknown kernel {self.name!r}")


KERNELS = ("zero", "constant", "gaussian", "harmonic")


def make_kernel(name: str, **params) -> PairKernel:
    if name not in KERNELS:
        raise ValueError(f"unknown kernel {name!r}; known: {KERNELS}")
    required = {"constant": ["value"], "gaussian": ["strength", "range"], "harmonic": ["k"]}
    missing = [k for k in required.get(name, []) if k not in params]
    if missing:
        raise ValueError(f"kernel {name!r} needs parameters {missing}")
    return PairKernel(name, dict(params))


@dataclass(frozen=True, eq=False)
class MeanFieldProblem:
    """N dressed particles with pair potential v and inverse-mass matrix mu~.

    ``kernel`` is a ``PairKernel`` (function of |R - R'|^2) or a general
    symmetric callable ``v(R, R')`` taking broadcastable coordinate tuples.
    """

    n_particles: int
    kernel: PairKernel | Callable
    mu_tilde: np.ndarray

    def __post_init__(self):
        mu = np.atleast_2d(np.asarray(self.mu_tilde, dtype=float))
        if mu.shape[0] != mu.shape[1]:
            raise ValueError("mu_tilde must be square")
        if not np.allclose(mu, mu.T, atol=1e-14):
            raise ValueError("mu_tilde must be symmetric")
        object.__setattr__(self, "mu_tilde", mu)
        if self.n_particles < 1:
            raise ValueError("n_particles must be >= 1")

    @property
    def chi_tilde(self) -> np.ndarray:
        return self.mu_tilde + 0.5 * np.eye(self.mu_tilde.shape[0])

    def check_grid(self, grid: Grid) -> None:
        if self.mu_tilde.shape[0] != grid.dim:
            raise ValueError(f"mu_tilde is {self.mu_tilde.shape[0]}-dimensional, grid is {grid.dim}-dimensional")

    def check_definite(self) -> None:
        if np.linalg.eigvalsh(self.mu_tilde).max() >= 0:
            raise ValueError("mu_tilde must be negative definite (positive effective mass)")


# --- Hartree field -----------------------------------------------------------

def pair_field(problem: MeanFieldProblem, grid: Grid, rho: np.ndarray) -> np.ndarray:
    """integral v(R, R') rho(R') dR' on the grid (no (N-1) factor)."""
    rho = np.asarray(rho, dtype=float).reshape(grid.shape)
    kern = problem.kernel
    h = grid.spacing
    if isinstance(kern, PairKernel):
        if kern.name == "zero":
            return np.zeros(grid.shape)
        if grid.boundary == "box":
            disp = np.meshgrid(*[np.arange(-(n - 1), n) * hh for n, hh in zip(grid.points, h)],
                               indexing="ij")
            kmat = kern(sum(d * d for d in disp))
            full = fftconvolve(rho, kmat, mode="full")
            sl = tuple(slice(n - 1, 2 * n - 1) for n in grid.points)
            out = full[sl]
        else:
            disp = []
            for n, hh, L in zip(grid.points, h, grid.extents):
                d = np.arange(n) * hh
                d = np.where(d > L / 2 + 1e-12 * L, d - L, d)
                disp.append(d)
            disp = np.meshgrid(*disp, indexing="ij")
            kmat = kern(sum(d * d for d in disp))
            out = np.fft.ifftn(np.fft.fftn(rho) * np.fft.fftn(kmat)).real
        return out * grid.cell_volume
    pts = [m.ravel() for m in grid.mesh()]
    vmat = kern(tuple(p[:, None] for p in pts), tuple(p[None, :] for p in pts))
    vmat = np.broadcast_to(vmat, (grid.size, grid.size))
    return (vmat @ rho.ravel() * grid.cell_volume).reshape(grid.shape)


def hartree_potential(problem: MeanFieldProblem, a: GridFunction) -> GridFunction:
    """Q(R) = (N - 1) * integral A(R')^2 v(R, R') dR' (|A|^2 for complex A)."""
    nrm = a.norm
    if abs(nrm - 1.0) > 1e-10:
        warnings.warn(f"background function has norm {nrm:.6g}; normalizing", stacklevel=2)
        a = a.normalized()
    q = (problem.n_particles - 1) * pair_field(problem, a.grid, np.abs(a.values) ** 2)
    return GridFunction(a.grid, q)


# --- kinetic operator ----------------------------------------------------------

def _second_difference(n: int, h: float) -> sp.csr_matrix:
    return sp.diags([np.ones(n - 1), -2 * np.ones(n), np.ones(n - 1)], [-1, 0, 1]) / h**2


def _first_difference(n: int, h: float) -> sp.csr_matrix:
    return sp.diags([-np.ones(n - 1), np.ones(n - 1)], [-1, 1]) / (2 * h)


def _embed(ops: dict, points: tuple) -> sp.csr_matrix:
    mats = [ops.get(ax, sp.identity(n)) for ax, n in enumerate(points)]
    out = mats[0]
    for m in mats[1:]:
        out = sp.kron(out, m)
    return sp.csr_matrix(out)


def kinetic_matrix(grid: Grid, mu: np.ndarray) -> sp.csr_matrix:
    """Sparse sum mu_{a a'} d_a d_a' with Dirichlet central differences (box grids)."""
    if grid.boundary != "box":
        raise ValueError("sparse kinetic matrix is only built for box grids")
    mu = np.asarray(mu, dtype=float)
    h = grid.spacing
    out = sp.csr_matrix((grid.size, grid.size))
    for a in range(grid.dim):
        for b in range(grid.dim):
            if mu[a, b] == 0:
                continue
            if a == b:
                term = _embed({a: _second_difference(grid.points[a], h[a])}, grid.points)
            else:
                term = _embed({a: _first_difference(grid.points[a], h[a]),
                               b: _first_difference(grid.points[b], h[b])}, grid.points)
            out = out + mu[a, b] * term
    return out


def kinetic_symbol(grid: Grid, mu: np.ndarray) -> np.ndarray:
    """Fourier multiplier of sum mu d_a d_a' on a periodic grid."""
    ks = grid.wavenumbers()
    kk = np.meshgrid(*ks, indexing="ij")
    sym = np.zeros(grid.shape)
    for a in range(grid.dim):
        for b in range(grid.dim):
            if mu[a, b] == 0:
                continue
            ka, kb = kk[a], kk[b]
            if a != b:
                # odd derivative: drop the Nyquist mode so the multiplier stays real
                ka = _drop_nyquist(ka, grid.points[a], a)
                kb = _drop_nyquist(kb, grid.points[b], b)
            sym = sym - mu[a, b] * ka * kb
    return sym


def _drop_nyquist(k: np.ndarray, n: int, axis: int) -> np.ndarray:
    if n % 2:
        return k
    k = k.copy()
    idx = [slice(None)] * k.ndim
    idx[axis] = n // 2
    k[tuple(idx)] = 0.0
    return k


class CgmfOperator:
    """H[Q] = Q + mu~ dd on a fixed grid; Q is supplied per application."""

    def __init__(self, problem: MeanFieldProblem, grid: Grid):
        problem.check_grid(grid)
        self.problem = problem
        self.grid = grid
        if grid.boundary == "box":
            self.kmat = kinetic_matrix(grid, problem.mu_tilde)
            self.symbol = None
        else:
            self.kmat = None
            self.symbol = kinetic_symbol(grid, problem.mu_tilde)

    def kinetic(self, f: np.ndarray) -> np.ndarray:
        f = np.asarray(f).reshape(self.grid.shape)
        if self.kmat is not None:
            return (self.kmat @ f.ravel()).reshape(self.grid.shape)
        out = np.fft.ifftn(self.symbol * np.fft.fftn(f))
        return out.real if np.isrealobj(f) else out

    def apply(self, q: np.ndarray, f: np.ndarray) -> np.ndarray:
        f = np.asarray(f).reshape(self.grid.shape)
        return q * f + self.kinetic(f)

    def dense(self, q: np.ndarray) -> np.ndarray:
        n = self.grid.size
        if self.kmat is not None:
            k = self.kmat.toarray()
        else:
            k = np.empty((n, n))
            eye = np.eye(n)
            for j in range(n):
                k[:, j] = self.kinetic(eye[j].reshape(self.grid.shape)).real.ravel()
        k = 0.5 * (k + k.T)
        return k + np.diag(np.asarray(q).ravel())

    def kinetic_bound(self) -> float:
        """Upper bound on the largest kinetic eigenvalue."""
        lam = max(np.linalg.eigvalsh(-self.problem.mu_tilde).max(), 0.0)
        if self.grid.boundary == "box":
            return lam * sum(4 / h**2 for h in self.grid.spacing)
        return lam * sum((np.pi / h) ** 2 for h in self.grid.spacing)


def apply_cgmf_hamiltonian(problem: MeanFieldProblem, a_background: GridFunction,
                           f: GridFunction) -> GridFunction:
    """Q_A f + sum mu~_{a a'} d_a d_a' f, with Q_A the Hartree field of A."""
    op = CgmfOperator(problem, f.grid)
    q = hartree_potential(problem, a_background).values.real
    return GridFunction(f.grid, op.apply(q, f.values))


# --- energies ----------------------------------------------------------------

def _first_moments(grid: Grid, a: np.ndarray) -> np.ndarray:
    """g_a = integral A* dA/dR_a (zero for real A vanishing at the walls)."""
    out = np.zeros(grid.dim, dtype=complex)
    for ax in range(grid.dim):
        if grid.boundary == "box":
            d = _embed({ax: _first_difference(grid.points[ax], grid.spacing[ax])}, grid.points)
            da = (d @ a.ravel()).reshape(grid.shape)
        else:
            k = np.meshgrid(*grid.wavenumbers(), indexing="ij")[ax]
            k = _drop_nyquist(k, grid.points[ax], ax)
            da = np.fft.ifftn(1j * k * np.fft.fftn(a))
        out[ax] = np.vdot(a, da) * grid.cell_volume
    return out


def energy_bookkeeping(problem: MeanFieldProblem, a: GridFunction):
    """Product-state energy E~ and the single-particle eigenvalue E~'.

    For W = prod_l A(R_l) with mu_{l a l' a'} = -delta delta / 2 + chi~:

        E~  = N T + N (N-1) chi~:g g + N (N-1) U / 2
        E~' = E~ - (N-1) T - (N-1)(N-2) q,    q = U/2 + chi~:g g

    where T = <A|mu~ dd|A>, U = integral A^2 v A^2 and g = integral A* dA.  The
    q-term is read with q^ acting on the right-hand pair A(R')A(R'').
    Returns ``(E~, E~', diagnostics)``.
    """
    grid = a.grid
    nrm = a.norm
    if abs(nrm - 1.0) > 1e-10:
        warnings.warn(f"function has norm {nrm:.6g}; normalizing", stacklevel=2)
        a = a.normalized()
    n = problem.n_particles
    op = CgmfOperator(problem, grid)
    vals = a.values
    t1 = float(np.vdot(vals, op.kinetic(vals)).real * grid.cell_volume)
    rho = np.abs(vals) ** 2
    u = float(np.sum(rho * pair_field(problem, grid, rho)) * grid.cell_volume)
    g = _first_moments(grid, vals)
    cross = complex(g @ problem.chi_tilde @ g).real
    e = n * t1 + n * (n - 1) * cross + 0.5 * n * (n - 1) * u
    q_term = 0.5 * u + cross
    e_prime = e - (n - 1) * t1 - (n - 1) * (n - 2) * q_term
    e_rayleigh = t1 + (n - 1) * u
    diag = {"kinetic": t1, "pair": u, "cross": cross, "q_term": q_term,
            "e_prime_rayleigh": e_rayleigh}
    return e, e_prime, diag


def energy_functional(problem: MeanFieldProblem, grid: Grid, values: np.ndarray) -> float:
    """E~[A] for an unnormalized real A: <W|H^CG|W> / <W|W> with W = prod A."""
    vals = np.asarray(values).reshape(grid.shape)
    nrm = float(np.sum(np.abs(vals) ** 2) * grid.cell_volume)
    e, _, _ = energy_bookkeeping(problem, GridFunction(grid, vals / np.sqrt(nrm)))
    return e


def energy_gradient(problem: MeanFieldProblem, a: GridFunction) -> np.ndarray:
    """Functional derivative of E~ at normalized real A: 2N (H A - E~' A)."""
    op = CgmfOperator(problem, a.grid)
    q = hartree_potential(problem, a).values.real
    ha = op.apply(q, a.values)
    e_p = np.vdot(a.values, ha).real * a.grid.cell_volume
    return 2 * problem.n_particles * (ha - e_p * a.values)


# --- condensate --------------------------------------------------------------

@dataclass(eq=False)
class CondensateSolution:
    a: GridFunction
    e_tilde_prime: float
    e_tilde: float
    iterations: int
    residual: float
    converged: bool = True
    history: dict = field(default_factory=dict)
    q: np.ndarray | None = None


class CondensateConvergenceError(RuntimeError):
    def __init__(self, msg: str, history: dict):
        super().__init__(msg)
        self.history = history


def default_initial(grid: Grid) -> GridFunction:
    """Centered Gaussian of width L/8 per axis."""
    mesh = grid.mesh()
    vals = np.ones(grid.shape)
    for x, L in zip(mesh, grid.extents):
        vals = vals * np.exp(-0.5 * (x / (L / 8)) ** 2)
    return GridFunction(grid, vals).normalized()


def _fix_sign(vals: np.ndarray) -> np.ndarray:
    s = np.sum(vals)
    if abs(s) < 1e-12 * np.abs(vals).sum():
        s = vals.ravel()[np.argmax(np.abs(vals))]
    return vals * np.sign(s) if s != 0 else vals


class _ShiftedSolver:
    """Solves (I + dtau (H[Q] - c)) x = b."""

    def __init__(self, op: CgmfOperator, q: np.ndarray, dtau: float):
        self.op, self.q, self.dtau = op, q, dtau
        self.c = float(q.min())
        n = op.grid.size
        if op.kmat is not None and n <= 200_000:
            m = sp.identity(n) + dtau * (op.kmat + sp.diags(q.ravel() - self.c))
            self._lu = spla.splu(sp.csc_matrix(m))
        else:
            self._lu = None

    def __call__(self, b: np.ndarray) -> np.ndarray:
        shape = self.op.grid.shape
        if self._lu is not None:
            return self._lu.solve(b.ravel()).reshape(shape)
        n = self.op.grid.size
        lin = spla.LinearOperator(
            (n, n), dtype=float,
            matvec=lambda x: x + self.dtau * (self.op.apply(self.q - self.c, x.reshape(shape)).real.ravel()))
        x, info = spla.cg(lin, b.ravel(), x0=b.ravel(), rtol=1e-13, maxiter=20 * n)
        if info != 0:
            raise RuntimeError(f"CG failed in imaginary-time step (info={info})")
        return x.reshape(shape)


def solve_condensate(problem: MeanFieldProblem, grid: Grid, init: GridFunction | None = None,
                     tol: float = 1e-10, max_iter: int = 500, damping: float = 0.5,
                     dtau: float | None = None) -> CondensateSolution:
    """Self-consistent imaginary-time iteration for the real condensate A.

    Each step solves (1 + dtau (H[Q] - min Q)) A' = A with a damped Hartree
    field Q <- (1 - damping) Q + damping Q[A], renormalizes, and is accepted
    only if E~ does not increase.  A rejected step halves dtau and resets Q to
    the true Hartree field; accepted steps let dtau grow back.  Stops when
    ||A_{k+1} - A_k|| <= tol at the full dtau, where a small change implies a
    small eigen-residual.
    """
    problem.check_grid(grid)
    problem.check_definite()
    if tol <= 0:
        raise ValueError("tol must be positive")
    if not 0 < damping <= 1:
        raise ValueError("damping must lie in (0, 1]")
    op = CgmfOperator(problem, grid)
    if dtau is None:
        gap_scale = np.linalg.eigvalsh(-problem.mu_tilde).min() * (np.pi / max(grid.extents)) ** 2
        dtau = 100.0 / gap_scale
    dtau_full = dtau
    a = (init if init is not None else default_initial(grid))
    a = GridFunction(grid, _fix_sign(a.values.real)).normalized()
    q_mix = hartree_potential(problem, a).values.real
    e_old = energy_bookkeeping(problem, a)[0]
    hist = {"iteration": [], "change": [], "residual": [], "e_tilde": [], "dtau": []}
    vol = grid.cell_volume
    converged = False
    it = 0
    while it < max_iter:
        it += 1
        step = _ShiftedSolver(op, q_mix, dtau)
        new = _fix_sign(step(a.values.real))
        new = new / np.sqrt(np.sum(new**2) * vol)
        cand = GridFunction(grid, new)
        e_new = energy_bookkeeping(problem, cand)[0]
        if e_new > e_old + 1e-13 * max(1.0, abs(e_old)):
            dtau *= 0.5
            q_mix = hartree_potential(problem, a).values.real
            if dtau < 1e-14 * dtau_full:
                break
            continue
        change = float(np.sqrt(np.sum((new - a.values.real) ** 2) * vol))
        a, e_old = cand, e_new
        q_true = hartree_potential(problem, a).values.real
        q_mix = (1 - damping) * q_mix + damping * q_true
        ha = op.apply(q_true, a.values.real)
        ep = float(np.sum(a.values.real * ha) * vol)
        res = float(np.sqrt(np.sum((ha - ep * a.values.real) ** 2) * vol))
        hist["iteration"].append(it)
        hist["change"].append(change)
        hist["residual"].append(res)
        hist["e_tilde"].append(e_new)
        hist["dtau"].append(dtau)
        if change <= tol and dtau >= dtau_full:
            converged = True
            break
        dtau = min(2.0 * dtau, dtau_full)
    if not converged:
        raise CondensateConvergenceError(
            f"condensate did not converge in {max_iter} iterations "
            f"(last change {hist['change'][-1] if hist['change'] else float('nan'):.3e})", hist)
    q = hartree_potential(problem, a).values.real
    ha = op.apply(q, a.values.real)
    ep = float(np.sum(a.values.real * ha) * vol)
    res = float(np.sqrt(np.sum((ha - ep * a.values.real) ** 2) * vol))
    e, _, _ = energy_bookkeeping(problem, a)
    return CondensateSolution(GridFunction(grid, a.values.real), ep, e, it, res, True, hist, q)


# --- excitations ---------------------------------------------------------------

def _moment_key(grid: Grid, vals: np.ndarray) -> tuple:
    w = np.abs(vals) ** 2
    return tuple(round(float(np.sum(w * x) / np.sum(w)), 10) for x in grid.mesh())


def solve_excitation(problem: MeanFieldProblem, cond: CondensateSolution, count: int = 1,
                     degeneracy_tol: float = 1e-9):
    """Lowest ``count`` eigenpairs of H[Q_A] on the orthogonal complement of A.

    Returns a list of ``(B, eigenvalue)`` in ascending order.  Within a
    degenerate level the functions are ordered by their first grid moments.
    """
    grid = cond.a.grid
    if count < 1 or count > grid.size - 1:
        raise ValueError(f"count must lie in [1, {grid.size - 1}]")
    op = CgmfOperator(problem, grid)
    q = hartree_potential(problem, cond.a).values.real
    a = cond.a.values.real.ravel()
    a = a / np.linalg.norm(a)
    if grid.size <= 4096:
        h = op.dense(q)
        c = sla.null_space(a[None, :])
        hc = c.T @ h @ c
        lam, vec = sla.eigh(0.5 * (hc + hc.T), subset_by_index=[0, count - 1])
        vecs = c @ vec
    else:
        n = grid.size
        shift = op.kinetic_bound() + np.abs(q).max()

        def mv(x):
            x = np.ravel(x)     # ARPACK may pass an (n, 1) column
            ax = a @ x
            xp = x - a * ax
            y = op.apply(q, xp.reshape(grid.shape)).real.ravel()
            y = y - a * (a @ y)
            return y + shift * a * ax

        lin = spla.LinearOperator((n, n), matvec=mv, dtype=float)
        lam, vecs = spla.eigsh(lin, k=count, which="SA", tol=1e-12)
        order = np.argsort(lam)
        lam, vecs = lam[order], vecs[:, order]
    out = []
    for j in range(count):
        v = vecs[:, j].reshape(grid.shape)
        v = v / np.sqrt(np.sum(v**2) * grid.cell_volume)
        v = v * np.sign(v.ravel()[np.argmax(np.abs(v))])
        out.append((GridFunction(grid, v), float(lam[j])))
    # group degenerate levels and order inside each group by grid moments
    scale = max(1.0, max(abs(l) for _, l in out))
    groups, cur = [], [out[0]]
    for item in out[1:]:
        if abs(item[1] - cur[-1][1]) <= degeneracy_tol * scale:
            cur.append(item)
        else:
            groups.append(cur)
            cur = [item]
    groups.append(cur)
    ordered = []
    for grp in groups:
        ordered.extend(sorted(grp, key=lambda it: _moment_key(grid, it[0].values.real)))
    return ordered


# --- real-time propagation ----------------------------------------------------

@dataclass(eq=False)
class Trajectory:
    times: np.ndarray
    states: list
    norms: np.ndarray
    energies: np.ndarray


def mean_field_energy(problem: MeanFieldProblem, w: GridFunction) -> float:
    """<W|mu~ dd|W> + (N-1)/2 integral |W|^2 v |W|^2, conserved by ``cgwe_propagate``."""
    op = CgmfOperator(problem, w.grid)
    vol = w.grid.cell_volume
    kin = np.vdot(w.values, op.kinetic(w.values)).real * vol
    rho = np.abs(w.values) ** 2
    pot = 0.5 * (problem.n_particles - 1) * np.sum(rho * pair_field(problem, w.grid, rho)) * vol
    return float(kin + pot)


class _CrankNicolson:
    def __init__(self, op: CgmfOperator, dt: float):
        self.op, self.dt = op, dt
        g = op.grid
        if op.kmat is None:
            self._pre = 1.0 / (1.0 + 0.5j * dt * op.symbol)

    def step(self, q_mid: np.ndarray, w: np.ndarray, guess: np.ndarray) -> np.ndarray:
        op, dt = self.op, self.dt
        shape = op.grid.shape
        rhs = w - 0.5j * dt * op.apply(q_mid, w)
        if op.kmat is not None:
            n = op.grid.size
            m = sp.identity(n, dtype=complex) + 0.5j * dt * (op.kmat + sp.diags(q_mid.ravel()))
            return spla.spsolve(sp.csc_matrix(m), rhs.ravel()).reshape(shape)
        if not np.any(q_mid):
            return np.fft.ifftn(self._pre * np.fft.fftn(rhs))
        n = op.grid.size
        lin = spla.LinearOperator(
            (n, n), dtype=complex,
            matvec=lambda x: (x.reshape(shape) + 0.5j * dt * op.apply(q_mid, x.reshape(shape))).ravel())
        pre = spla.LinearOperator(
            (n, n), dtype=complex,
            matvec=lambda x: np.fft.ifftn(self._pre * np.fft.fftn(x.reshape(shape))).ravel())
        x, info = spla.gmres(lin, rhs.ravel(), x0=guess.ravel(), M=pre, rtol=1e-14,
                             atol=0.0, restart=50, maxiter=200)
        if info != 0:
            raise RuntimeError(f"GMRES failed in Crank-Nicolson step (info={info})")
        return x.reshape(shape)


def cgwe_propagate(problem: MeanFieldProblem, w0: GridFunction, t_span, dt: float,
                   save_every: int = 1, fixed_point_tol: float = 1e-13,
                   check_step: bool = True) -> Trajectory:
    """Real-time mean-field propagation i dW/dt2 = (Q[W] + mu~ dd) W.

    Crank-Nicolson with the Hartree field averaged over the step,
    Q_mid = (Q[W_n] + Q[W_{n+1}]) / 2, solved by fixed-point iteration.  The
    scheme conserves the norm and ``mean_field_energy`` up to the fixed-point
    tolerance.  ``t_span`` is a final time or a ``(t_start, t_end)`` pair.
    """
    grid = w0.grid
    op = CgmfOperator(problem, grid)
    t_start, t_end = (0.0, float(t_span)) if np.isscalar(t_span) else map(float, t_span)
    if dt <= 0 or t_end <= t_start:
        raise ValueError("need dt > 0 and t_end > t_start")
    if abs(w0.norm - 1.0) > 1e-8:
        raise ValueError(f"initial state must be normalized (norm {w0.norm:.6g})")
    # round the step count up so the adjusted step never exceeds the requested one
    nsteps = max(1, int(np.ceil((t_end - t_start) / dt * (1 - 1e-12))))
    dt = (t_end - t_start) / nsteps
    if check_step:
        q0 = hartree_potential(problem, w0).values.real
        lam = op.kinetic_bound() + np.abs(q0).max()
        if dt > 0.1 / lam:
            raise ValueError(f"time step {dt:.3e} does not resolve the largest eigenvalue "
                             f"{lam:.3e}; use dt <= {0.1 / lam:.3e}")
    cn = _CrankNicolson(op, dt)
    nm1 = problem.n_particles - 1
    w = w0.values.copy()

    def field_of(x):
        if nm1 == 0:
            return np.zeros(grid.shape)
        return nm1 * pair_field(problem, grid, np.abs(x) ** 2)

    q_n = field_of(w)
    times, states, norms, energies = [t_start], [GridFunction(grid, w.copy())], [w0.norm], \
        [mean_field_energy(problem, w0)]
    for k in range(1, nsteps + 1):
        q_next = q_n
        new = w
        for _ in range(100):
            prev = new
            new = cn.step(0.5 * (q_n + q_next), w, prev)
            if nm1 == 0 or np.max(np.abs(new - prev)) <= fixed_point_tol:
                break
            q_next = field_of(new)
        w = new
        q_n = field_of(w)
        if k % save_every == 0 or k == nsteps:
            gf = GridFunction(grid, w.copy())
            times.append(t_start + k * dt)
            states.append(gf)
            norms.append(gf.norm)
            energies.append(mean_field_energy(problem, gf))
    return Trajectory(np.array(times), states, np.array(norms), np.array(energies))


# --- I/O ---------------------------------------------------------------------

_MAGIC = b"CGWF"
_VERSION = 1


def write_gridfunction(path: str | Path, f: GridFunction) -> None:
    """Binary layout (little-endian): magic, version, ndim, boundary code,
    points (u32 x ndim), extents (f64 x ndim), then complex64 values in C order."""
    g = f.grid
    head = struct.pack("<4sIII", _MAGIC, _VERSION, g.dim, BOUNDARIES.index(g.boundary))
    head += struct.pack(f"<{g.dim}I", *g.points) + struct.pack(f"<{g.dim}d", *g.extents)
    with open(path, "wb") as fh:
        fh.write(head)
        fh.write(np.ascontiguousarray(f.values, dtype="<c8").tobytes())


def read_gridfunction(path: str | Path) -> GridFunction:
    data = Path(path).read_bytes()
    magic, ver, ndim, bcode = struct.unpack_from("<4sIII", data, 0)
    if magic != _MAGIC or ver != _VERSION:
        raise ValueError("not a grid-function file")
    off = 16
    pts = struct.unpack_from(f"<{ndim}I", data, off)
    off += 4 * ndim
    ext = struct.unpack_from(f"<{ndim}d", data, off)
    off += 8 * ndim
    grid = Grid(ext, pts, BOUNDARIES[bcode])
    vals = np.frombuffer(data, dtype="<c8", offset=off, count=grid.size)
    return GridFunction(grid, vals.astype(complex).reshape(grid.shape))


def write_gridfunction_csv(path: str | Path, f: GridFunction) -> None:
    if f.grid.dim != 1:
        raise ValueError("CSV export is for 1D grid functions")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x", "re", "im"])
        for x, z in zip(f.grid.axes()[0], f.values):
            w.writerow([repr(float(x)), repr(float(z.real)), repr(float(z.imag))])


def read_gridfunction_csv(path: str | Path, extent: float, boundary: str = "box") -> GridFunction:
    rows = list(csv.DictReader(open(path)))
    vals = np.array([float(r["re"]) + 1j * float(r["im"]) for r in rows])
    return GridFunction(Grid((extent,), (len(vals),), boundary), vals)
