"""Variational Monte Carlo with antisymmetrized short/long-scale trial functions.

A trial function for N <= 4 particles is

    Psi = J(x) * Xi[ chi_1(x_1) ... chi_N(x_N) ],   chi_k(x) = phi_k(x) w_{q(k)}(eps x),

with q(k) = k for the first N* (distinguished) particles and N* + 1 for the
rest, Xi the explicit permutation antisymmetrizer and J an optional symmetric
Jastrow factor exp(-beta sum_{i<j} |x_i - x_j|^2).  Energies are local-energy
averages over |Psi|^2 sampled by Metropolis, optionally restricted to a cube.
Units: hbar = m = 1.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

MAX_PARTICLES = 4


def _permutations(n: int):
    """(permutation, sign) pairs for n objects."""
    out = []
    for perm in itertools.permutations(range(n)):
        inv = sum(1 for i in range(n) for j in range(i + 1, n) if perm[i] > perm[j])
        out.append((perm, -1 if inv % 2 else 1))
    return out


def antisymmetrize(product: Callable, x: np.ndarray):
    """(1/sqrt(N!)) sum_s sign(s) product(x permuted by s).

    ``x`` has shape (N, d) or (walkers, N, d); ``product`` maps such an array
    to the unsymmetrized product value.
    """
    x = np.asarray(x)
    n = x.shape[-2]
    if n > MAX_PARTICLES:
        raise ValueError(f"explicit antisymmetrizer supports N <= {MAX_PARTICLES}, got {n}")
    total = 0.0
    for perm, sign in _permutations(n):
        total = total + sign * product(x[..., list(perm), :])
    return total / math.sqrt(math.factorial(n))


# --- orbitals and envelopes ------------------------------------------------------------
# Each returns (value (W,), gradient (W, d), laplacian (W,)) for points of shape (W, d).

@dataclass(frozen=True)
class GaussianOrbital:
    center: tuple
    width: float

    def __call__(self, x):
        c = np.asarray(self.center, dtype=float)
        s2 = self.width**2
        y = x - c
        r2 = np.sum(y * y, axis=-1)
        val = np.exp(-0.5 * r2 / s2)
        grad = -y / s2 * val[..., None]
        lap = (r2 / s2**2 - x.shape[-1] / s2) * val
        return val, grad, lap


@dataclass(frozen=True)
class HermiteOrbital:
    """1D Hermite function H_n(y) exp(-y^2/2), y = (x - center)/width."""

    order: int
    width: float = 1.0
    center: float = 0.0

    def __call__(self, x):
        if x.shape[-1] != 1:
            raise ValueError("Hermite orbitals are one-dimensional")
        s = self.width
        y = (x[..., 0] - self.center) / s
        coef = np.zeros(self.order + 1)
        coef[-1] = 1.0
        h = np.polynomial.hermite.hermval(y, coef)
        dh = np.polynomial.hermite.hermval(y, np.polynomial.hermite.hermder(coef)) if self.order else 0.0
        g = np.exp(-0.5 * y * y)
        val = h * g
        dval = (dh - y * h) * g / s
        lap = (y * y - (2 * self.order + 1)) * val / s**2
        return val, dval[..., None], lap


@dataclass(frozen=True)
class GaussianEnvelope:
    """Long-scale envelope exp(-|R - center|^2 / (2 width^2)) in R = eps x."""

    center: tuple
    width: float

    def __call__(self, R):
        return GaussianOrbital(self.center, self.width)(R)


@dataclass(frozen=True)
class FlatEnvelope:
    def __call__(self, R):
        w = R.shape[:-1]
        return np.ones(w), np.zeros(R.shape), np.zeros(w)


@dataclass(eq=False)
class TrialFunction:
    n_particles: int
    n_star: int
    orbitals: Sequence
    envelopes: Sequence
    epsilon: float = 1.0
    jastrow_beta: float | None = None
    cutoff: "CubeSpec | None" = None   # Dirichlet cutoff factor when the cube mode requires it

    def __post_init__(self):
        if not 1 <= self.n_particles <= MAX_PARTICLES:
            raise ValueError(f"N must lie in 1..{MAX_PARTICLES}")
        if len(self.orbitals) != self.n_particles:
            raise ValueError("need one short-scale orbital per particle")
        if not 0 <= self.n_star <= self.n_particles:
            raise ValueError("N* must lie in 0..N")
        if len(self.envelopes) != self.n_star + 1:
            raise ValueError("need N* + 1 long-scale envelopes")

    def envelope_index(self, k: int) -> int:
        return k if k < self.n_star else self.n_star

    def _orbital_table(self, x: np.ndarray):
        """Values, gradients and laplacians of chi_k at every particle position."""
        w, n, d = x.shape
        eps = self.epsilon
        vals = np.empty((n, w, n))
        grads = np.empty((n, w, n, d))
        laps = np.empty((n, w, n))
        for k in range(n):
            pts = x.reshape(w * n, d)
            pv, pg, pl = self.orbitals[k](pts)
            ev, eg, el = self.envelopes[self.envelope_index(k)](eps * pts)
            v = pv * ev
            g = pg * ev[:, None] + eps * pv[:, None] * eg
            lap = pl * ev + 2 * eps * np.sum(pg * eg, axis=-1) + eps**2 * pv * el
            vals[k] = v.reshape(w, n)
            grads[k] = g.reshape(w, n, d)
            laps[k] = lap.reshape(w, n)
        return vals, grads, laps

    def _determinant_part(self, x: np.ndarray, derivatives: bool):
        """Antisymmetrized product D, its gradient (W, N, d) and total laplacian (W,)."""
        w, n, d = x.shape
        vals, grads, laps = self._orbital_table(x)
        norm = 1.0 / math.sqrt(math.factorial(n))
        dval = np.zeros(w)
        dgrad = np.zeros((w, n, d))
        dlap = np.zeros(w)
        for perm, sign in _permutations(n):
            # orbital k sits on particle perm[k]
            factors = [vals[k][:, perm[k]] for k in range(n)]
            prod = np.prod(factors, axis=0)
            dval += sign * prod
            if not derivatives:
                continue
            for k in range(n):
                rest = np.prod([factors[j] for j in range(n) if j != k], axis=0) if n > 1 else np.ones(w)
                i = perm[k]
                dgrad[:, i, :] += sign * grads[k][:, i, :] * rest[:, None]
                dlap += sign * laps[k][:, i] * rest
        return norm * dval, norm * dgrad, norm * dlap

    def _symmetric_part(self, x: np.ndarray):
        """Jastrow times cube cutoff: value, gradient and laplacian."""
        w, n, d = x.shape
        jv, jg, jl = np.ones(w), np.zeros((w, n, d)), np.zeros(w)
        if self.jastrow_beta:
            b = self.jastrow_beta
            diff = x[:, :, None, :] - x[:, None, :, :]
            r2 = np.sum(diff**2, axis=-1)
            u = -b * np.sum(np.triu(r2, 1), axis=(1, 2))
            gu = -2 * b * np.sum(diff, axis=2)
            lu = -2 * b * d * n * (n - 1)
            jv = np.exp(u)
            jg = gu * jv[:, None, None]
            jl = (np.sum(gu**2, axis=(1, 2)) + lu) * jv
        if self.cutoff is None or self.cutoff.mode != "dirichlet":
            return jv, jg, jl
        cv, cg, cl = self.cutoff.factor(x)
        val = jv * cv
        grad = jg * cv[:, None, None] + jv[:, None, None] * cg
        lap = jl * cv + 2 * np.sum(jg * cg, axis=(1, 2)) + jv * cl
        return val, grad, lap

    def value(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.ndim == 2:
            return self.value(x[None])[0]
        dv, _, _ = self._determinant_part(x, derivatives=False)
        sv, _, _ = self._symmetric_part(x)
        return dv * sv

    def derivatives(self, x: np.ndarray):
        """Psi, grad Psi (W, N, d) and the total laplacian sum_i nabla_i^2 Psi."""
        dv, dg, dl = self._determinant_part(x, derivatives=True)
        sv, sg, sl = self._symmetric_part(x)
        val = dv * sv
        grad = dg * sv[:, None, None] + dv[:, None, None] * sg
        lap = dl * sv + 2 * np.sum(dg * sg, axis=(1, 2)) + dv * sl
        return val, grad, lap


# --- Hamiltonian and sampling domain ----------------------------------------------------

@dataclass(frozen=True, eq=False)
class Hamiltonian:
    """sum_i [-1/2 nabla_i^2 + external(x_i)] + sum_{i<j} pair(|x_i - x_j|)."""

    external: Callable
    pair: Callable | None = None
    dim: int = 1

    def potential(self, x: np.ndarray) -> np.ndarray:
        w, n, d = x.shape
        v = self.external(x.reshape(w * n, d)).reshape(w, n).sum(axis=1)
        if self.pair is not None and n > 1:
            iu, ju = np.triu_indices(n, 1)
            r = np.linalg.norm(x[:, iu, :] - x[:, ju, :], axis=-1)
            v = v + self.pair(r).sum(axis=1)
        return v


def harmonic_trap(omega: float = 1.0, dim: int = 1, pair: Callable | None = None) -> Hamiltonian:
    return Hamiltonian(lambda p: 0.5 * omega**2 * np.sum(p * p, axis=-1), pair, dim)


def gaussian_pair(strength: float, range_: float) -> Callable:
    return lambda r: strength * np.exp(-(r / range_) ** 2)


CUBE_MODES = ("hard", "dirichlet")


@dataclass(frozen=True)
class CubeSpec:
    """Cube of edge b centered at eps^-1 R for every particle coordinate.

    ``hard`` rejects proposals that leave the cube; ``dirichlet`` additionally
    multiplies the trial by prod cos(pi (x - c) / b), which vanishes on the
    faces, so the restricted energy is a Rayleigh quotient of a function in the
    cube's form domain.
    """

    center: tuple           # eps^-1 R, shape (N, d) flattened or broadcastable
    edge: float
    mode: str = "hard"

    def __post_init__(self):
        if self.edge <= 0:
            raise ValueError("cube edge must be positive")
        if self.mode not in CUBE_MODES:
            raise ValueError(f"cube mode must be one of {CUBE_MODES}")

    def center_array(self, n: int, d: int) -> np.ndarray:
        return np.broadcast_to(np.asarray(self.center, dtype=float), (n, d))

    def inside(self, x: np.ndarray) -> np.ndarray:
        c = self.center_array(*x.shape[-2:])
        return np.all(np.abs(x - c) < 0.5 * self.edge, axis=(-2, -1))

    def factor(self, x: np.ndarray):
        c = self.center_array(*x.shape[-2:])
        k = np.pi / self.edge
        cs = np.cos(k * (x - c))
        sn = np.sin(k * (x - c))
        val = np.prod(cs, axis=(-2, -1))
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(cs != 0, -k * sn / cs, 0.0)
        grad = ratio * val[..., None, None]
        lap = -k**2 * x.shape[-2] * x.shape[-1] * val
        return val, grad, lap


def default_cube_edge(epsilon: float, width_factor: float = 2.0) -> float:
    """Six Delta-kernel widths in r units; the width is width_factor * eps in R,
    i.e. width_factor lattice periods in r, independent of eps."""
    del epsilon
    return 6.0 * width_factor


# --- Monte Carlo estimate ------------------------------------------------------------

@dataclass
class McEstimate:
    value: float
    std_error: float
    n_samples: int
    seed: int
    variance: float = float("nan")         # local-energy variance
    acceptance: float = float("nan")
    n_rejected: int = 0                    # samples with non-finite local energy

    def to_dict(self) -> dict:
        return {"value": self.value, "std_error": self.std_error, "n_samples": self.n_samples,
                "seed": self.seed, "variance": self.variance, "acceptance": self.acceptance,
                "n_rejected": self.n_rejected}


def replica_error(walker_means: np.ndarray) -> float:
    """Standard error of the grand mean from independent walker means."""
    m = np.asarray(walker_means, dtype=float)
    return float(np.std(m, ddof=1) / math.sqrt(len(m))) if len(m) > 1 else float("nan")


def local_energy(trial: TrialFunction, ham: Hamiltonian, x: np.ndarray):
    val, _, lap = trial.derivatives(x)
    with np.errstate(divide="ignore", invalid="ignore"):
        kin = -0.5 * lap / val
    return kin + ham.potential(x), val


def _initial_walkers(trial: TrialFunction, rng, walkers: int, d: int, cube: CubeSpec | None):
    n = trial.n_particles
    if cube is not None:
        c = cube.center_array(n, d)
        return c + 0.25 * cube.edge * rng.uniform(-1, 1, size=(walkers, n, d))
    centers = np.array([np.broadcast_to(getattr(o, "center", 0.0), (d,)) for o in trial.orbitals],
                       dtype=float)
    return centers + rng.normal(size=(walkers, n, d))


def _run_chain(trial, ham, cube, rng, walkers, sweeps, burn_in, step0):
    n, d = trial.n_particles, ham.dim
    x = _initial_walkers(trial, rng, walkers, d, cube)
    psi = trial.value(x)
    step = np.full(n, step0)
    accepted = proposed = 0
    wsum = np.zeros(walkers)
    wcount = np.zeros(walkers)
    moments = np.zeros(3)            # count, sum, sum of squares of single-sample local energies
    rejected = 0
    for sweep in range(burn_in + sweeps):
        acc_sweep = np.zeros(n)
        for i in range(n):
            trial_x = x.copy()
            trial_x[:, i, :] += step[i] * rng.normal(size=(walkers, d))
            new = trial.value(trial_x)
            ratio = (new / np.where(psi == 0, np.finfo(float).tiny, psi)) ** 2
            ok = rng.uniform(size=walkers) < ratio
            if cube is not None:
                ok &= cube.inside(trial_x)
            x[ok] = trial_x[ok]
            psi = np.where(ok, new, psi)
            acc_sweep[i] = ok.mean()
        if sweep < burn_in:
            # steer every particle's step towards 50 % acceptance
            step *= np.exp(acc_sweep - 0.5)
            continue
        accepted += acc_sweep.sum()
        proposed += n
        el, _ = local_energy(trial, ham, x)
        good = np.isfinite(el)
        rejected += int((~good).sum())
        wsum[good] += el[good]
        wcount += good
        moments += (good.sum(), el[good].sum(), np.sum(el[good] ** 2))
    keep = wcount > 0
    return wsum[keep] / wcount[keep], accepted / max(proposed, 1), rejected, moments


def mc_energy(trial: TrialFunction, hamiltonian: Hamiltonian, cube: CubeSpec | None = None,
              n_samples: int = 100_000, seed: int = 0, n_chains: int = 4, walkers: int = 250,
              burn_in: int = 100, step: float = 1.0) -> McEstimate:
    """Variational energy <Psi|H|Psi>/<Psi|Psi> by Metropolis local-energy averaging.

    ``n_samples`` local energies are drawn as n_chains x walkers x sweeps; each
    chain uses its own spawned seed and the chain means are merged by inverse
    variance in fixed order.
    """
    if cube is not None and cube.mode == "dirichlet" and trial.cutoff is not cube:
        trial = TrialFunction(trial.n_particles, trial.n_star, trial.orbitals, trial.envelopes,
                              trial.epsilon, trial.jastrow_beta, cube)
    if n_samples < n_chains * walkers * 2:
        walkers = max(1, n_samples // (2 * n_chains))
    sweeps = max(2, int(math.ceil(n_samples / (n_chains * walkers))))
    seqs = np.random.SeedSequence(seed).spawn(n_chains)
    x0 = _initial_walkers(trial, np.random.default_rng(seqs[0]), walkers, hamiltonian.dim, cube)
    if not np.any(trial.value(x0) != 0):
        raise ValueError("trial function vanishes on the sampling domain")
    means, variances, acc, rej = [], [], [], 0
    moments = np.zeros(3)
    for sq in seqs:
        wmeans, a, r, mom = _run_chain(trial, hamiltonian, cube, np.random.default_rng(sq),
                                  walkers, sweeps, burn_in, step)
        if mom[0] == 0:
            raise ValueError("no finite local energies were sampled")
        means.append(mom[1] / mom[0])
        variances.append(replica_error(wmeans) ** 2)
        acc.append(a)
        rej += r
        moments += mom
    means, variances = np.array(means), np.array(variances)
    if np.all(variances > 0):
        wts = 1.0 / variances
        value = float(np.sum(wts * means) / np.sum(wts))
        se = float(1.0 / math.sqrt(np.sum(wts)))
    else:
        value = float(means.mean())
        se = float(math.sqrt(np.mean(variances) / len(means)))
    count, s1, s2 = moments
    var = max(s2 / count - (s1 / count) ** 2, 0.0)
    return McEstimate(value, se, int(count), int(seed), float(var), float(np.mean(acc)), rej)


# --- families and optimization --------------------------------------------------------

def gaussian_family(n_particles: int = 2, n_star: int = 0, epsilon: float = 1.0,
                    envelope_width: float | None = None, jastrow: bool = False) -> Callable:
    """lambda = (spacing c, width s[, beta]) -> 1D Gaussian orbitals centered at
    c (k - (N-1)/2) with common width s, all sharing one background envelope."""
    def build(lam):
        lam = np.atleast_1d(np.asarray(lam, dtype=float))
        c, s = lam[0], lam[1]
        beta = lam[2] if jastrow else None
        orbs = [GaussianOrbital((c * (k - (n_particles - 1) / 2),), s) for k in range(n_particles)]
        env = FlatEnvelope() if envelope_width is None else GaussianEnvelope((0.0,), envelope_width)
        return TrialFunction(n_particles, n_star, orbs, [env] * (n_star + 1), epsilon, beta)
    return build


def hermite_family(n_particles: int = 2) -> Callable:
    """lambda = (s,) -> the N lowest 1D Hermite functions of width s."""
    def build(lam):
        s = float(np.atleast_1d(lam)[0])
        return TrialFunction(n_particles, 0, [HermiteOrbital(k, s) for k in range(n_particles)],
                             [FlatEnvelope()], 1.0)
    return build


FAMILIES = {"gaussian": gaussian_family, "hermite": hermite_family}


@dataclass
class OptimizationResult:
    lam: np.ndarray
    estimate: McEstimate
    initial: McEstimate
    trace: list = field(default_factory=list)     # (lambda, value) of accepted steps
    evaluations: int = 0
    budget_exhausted: bool = False


def optimize_lambda(family: Callable, hamiltonian: Hamiltonian, lambda0, bounds,
                    budget: int = 60, n_samples: int = 20_000, seed: int = 0,
                    step_fraction: float = 0.25, tol_fraction: float = 1e-3,
                    cube: CubeSpec | None = None, **mc_kwargs) -> OptimizationResult:
    """Compass search over lambda inside ``bounds``.

    Every evaluation reuses ``seed`` (common random numbers), a move is kept
    only if it lowers the estimate, and the step is halved after a full
    unsuccessful sweep over coordinates.  Stops when every step falls below
    ``tol_fraction`` of its bound width or after ``budget`` evaluations.
    """
    lo, hi = (np.asarray(b, dtype=float) for b in zip(*bounds))
    lam = np.clip(np.asarray(lambda0, dtype=float), lo, hi)
    span = hi - lo
    step = step_fraction * span

    def evaluate(l):
        return mc_energy(family(l), hamiltonian, cube, n_samples, seed, **mc_kwargs)

    best = evaluate(lam)
    initial = best
    trace = [(lam.tolist(), best.value)]
    evals = 1
    exhausted = False
    while np.any(step > tol_fraction * span):
        improved = False
        for i in range(len(lam)):
            for sgn in (1.0, -1.0):
                if evals >= budget:
                    exhausted = True
                    break
                cand = lam.copy()
                cand[i] = np.clip(cand[i] + sgn * step[i], lo[i], hi[i])
                if cand[i] == lam[i]:
                    continue
                est = evaluate(cand)
                evals += 1
                if est.value < best.value:
                    lam, best, improved = cand, est, True
                    trace.append((lam.tolist(), best.value))
                    break
            if exhausted:
                break
        if exhausted:
            break
        if not improved:
            step = step / 2
    return OptimizationResult(lam, best, initial, trace, evals, exhausted)
