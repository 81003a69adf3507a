"""Finite continuous-time reversible chains: generators, gaps, Dirichlet forms, mixing times."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Callable, Sequence

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.sparse.csgraph import connected_components

DENSE_LIMIT = 1500
MIXING_LIMIT = 2500


class NotErgodic(RuntimeError):
    pass


class NotReversible(RuntimeError):
    pass


@dataclass(frozen=True)
class ExactGenerator:
    """Integer numerators over a common denominator; rows sum to exactly zero."""

    numerators: sp.csr_matrix
    denominator: int

    def row_sums(self) -> np.ndarray:
        return np.asarray(self.numerators.sum(axis=1)).ravel()


@dataclass(frozen=True)
class FiniteChain:
    states: Any
    generator: sp.csr_matrix
    stationary: np.ndarray
    reversible: bool
    exact: ExactGenerator | None = None
    meta: dict = field(default_factory=dict, compare=False)

    @property
    def n(self) -> int:
        return self.generator.shape[0]

    def rate(self, i: int, j: int) -> float:
        return float(self.generator[i, j])

    def off_diagonal(self) -> sp.coo_matrix:
        g = self.generator.tocoo()
        keep = g.row != g.col
        return sp.coo_matrix((g.data[keep], (g.row[keep], g.col[keep])), shape=g.shape)

    def to_json(self) -> dict:
        off = self.off_diagonal()
        states = self.states
        if isinstance(states, np.ndarray):
            states = states.tolist()
        return {
            "states": list(states),
            "stationary": self.stationary.tolist(),
            "triplets": [[int(i), int(j), float(r)] for i, j, r in zip(off.row, off.col, off.data)],
        }


@dataclass(frozen=True)
class SpectralReport:
    gap: float
    relaxation: float
    method: str
    residual: float
    ergodic: bool = True
    n_states: int = 0
    eigenvector: np.ndarray | None = field(default=None, repr=False, compare=False)

    def to_json(self) -> dict:
        return {
            "states": self.n_states,
            "ergodic": self.ergodic,
            "gap": self.gap,
            "relaxation": self.relaxation,
            "method": self.method,
            "residual": self.residual,
        }


def chain_from_triplets(
    n: int,
    rows: np.ndarray,
    cols: np.ndarray,
    rates: np.ndarray,
    *,
    states: Any = None,
    stationary: np.ndarray | None = None,
    numerators: np.ndarray | None = None,
    denominator: int | None = None,
    check: bool = True,
) -> FiniteChain:
    """Assemble a chain from off-diagonal triplets (duplicates are summed)."""
    rows = np.asarray(rows, dtype=np.int64)
    cols = np.asarray(cols, dtype=np.int64)
    rates = np.asarray(rates, dtype=float)
    if check:
        if np.any(rows == cols):
            raise ValueError("triplets must be off-diagonal")
        if np.any(rates < 0):
            raise ValueError("negative rate")
    off = sp.csr_matrix((rates, (rows, cols)), shape=(n, n))
    off.sum_duplicates()
    off.eliminate_zeros()
    exact = None
    if numerators is not None:
        num = sp.csr_matrix((np.asarray(numerators, dtype=np.int64), (rows, cols)), shape=(n, n))
        num.sum_duplicates()
        rs = np.asarray(num.sum(axis=1)).ravel()
        num = (num - sp.diags(rs, dtype=np.int64)).tocsr()
        exact = ExactGenerator(num, int(denominator))
    gen = (off - sp.diags(np.asarray(off.sum(axis=1)).ravel())).tocsr()
    diff = off - off.T
    symmetric = diff.nnz == 0 or np.max(np.abs(diff.data)) <= 1e-15 * max(1.0, np.max(np.abs(off.data), initial=0))
    support = (off != 0).astype(np.int8)
    if check and (support - support.T).nnz:
        raise ValueError("rates have asymmetric support")
    if stationary is None:
        if symmetric:
            stationary = np.full(n, 1.0 / n)
        else:
            stationary = stationary_distribution(gen)
    stationary = np.asarray(stationary, dtype=float)
    reversible = symmetric or detailed_balance_residual_of(off, stationary) <= 1e-12
    if states is None:
        states = list(range(n))
    return FiniteChain(states, gen, stationary, bool(reversible), exact)


def build_chain(states: Sequence[Any], rate_rule: Callable[[Any, Any], Any]) -> FiniteChain:
    """Build a chain by evaluating ``rate_rule`` on every ordered pair of distinct states.

    Rational rates (``Fraction`` or ``int``) are additionally assembled exactly.
    """
    states = list(states)
    n = len(states)
    rows, cols, vals = [], [], []
    for i, x in enumerate(states):
        for j, y in enumerate(states):
            if i == j:
                continue
            r = rate_rule(x, y)
            if r is None or r == 0:
                continue
            if r < 0:
                raise ValueError(f"negative rate {r} between states {i} and {j}")
            rows.append(i)
            cols.append(j)
            vals.append(r)
    pairs = set(zip(rows, cols))
    for i, j in pairs:
        if (j, i) not in pairs:
            raise ValueError(f"asymmetric support between states {i} and {j}")
    num = den = None
    if vals and all(isinstance(v, (int, Fraction)) for v in vals):
        fr = [Fraction(v) for v in vals]
        den = math.lcm(*(f.denominator for f in fr))
        num = np.array([f.numerator * (den // f.denominator) for f in fr], dtype=np.int64)
    return chain_from_triplets(
        n,
        np.array(rows, dtype=np.int64),
        np.array(cols, dtype=np.int64),
        np.array([float(v) for v in vals]),
        states=states,
        numerators=num,
        denominator=den,
    )


def stationary_distribution(gen: sp.spmatrix) -> np.ndarray:
    """Left null vector of the generator, normalised (dense; small chains only)."""
    a = gen.toarray().T
    n = a.shape[0]
    a = np.vstack([a, np.ones(n)])
    b = np.zeros(n + 1)
    b[-1] = 1.0
    pi, *_ = np.linalg.lstsq(a, b, rcond=None)
    pi = np.clip(pi, 0, None)
    return pi / pi.sum()


def detailed_balance_residual_of(off: sp.spmatrix, pi: np.ndarray) -> float:
    """Max relative violation of pi(x) q(x,y) = pi(y) q(y,x)."""
    off = sp.csr_matrix(off)
    flux = sp.diags(pi) @ off
    diff = (flux - flux.T).tocoo()
    if diff.nnz == 0:
        return 0.0
    m = sp.csr_matrix(flux + flux.T)
    denom = np.asarray(m[diff.row, diff.col]).ravel()
    denom = np.where(denom == 0, 1.0, denom)
    return float(np.max(np.abs(diff.data) / np.abs(denom)))


def detailed_balance_residual(chain: FiniteChain, pi: np.ndarray | None = None) -> float:
    return detailed_balance_residual_of(chain.off_diagonal(), chain.stationary if pi is None else pi)


def is_ergodic(chain: FiniteChain) -> bool:
    if chain.n <= 1:
        return True
    off = chain.off_diagonal().tocsr()
    ncomp, _ = connected_components(off, directed=True, connection="strong")
    return ncomp == 1


def _symmetrised(chain: FiniteChain) -> sp.csr_matrix:
    """D^{1/2} (-L) D^{-1/2}, symmetric for reversible chains."""
    s = np.sqrt(chain.stationary)
    m = sp.diags(s) @ (-chain.generator) @ sp.diags(1.0 / s)
    m = sp.csr_matrix(m)
    return ((m + m.T) * 0.5).tocsr()


def spectral_gap(chain: FiniteChain, method: str = "auto", with_vector: bool = False) -> SpectralReport:
    """Second-smallest eigenvalue of -L and the relaxation time 1/gap.

    A one-state chain has no second eigenvalue; it is reported with an
    infinite gap and relaxation time 0.
    """
    n = chain.n
    if n == 1:
        return SpectralReport(math.inf, 0.0, "trivial", 0.0, True, 1)
    if not chain.reversible:
        raise NotReversible("spectral analysis needs a reversible chain")
    if not is_ergodic(chain):
        return SpectralReport(0.0, math.inf, "none", 0.0, False, n)
    sym = _symmetrised(chain)
    if method == "auto":
        method = "dense" if n <= DENSE_LIMIT else "iterative"
    if method == "dense":
        w, v = scipy.linalg.eigh(sym.toarray(), subset_by_index=[0, 1])
        lam, vec = float(w[1]), v[:, 1]
        label = "dense-symmetric"
    elif method == "iterative":
        lam, vec = _lanczos_gap(sym, np.sqrt(chain.stationary))
        label = "iterative"
    else:
        raise ValueError(f"unknown method {method!r}")
    residual = float(np.linalg.norm(sym @ vec - lam * vec))
    f = vec / np.sqrt(chain.stationary) if with_vector else None
    return SpectralReport(lam, 1.0 / lam, label, residual, True, n, f)


def _lanczos_gap(sym: sp.csr_matrix, top: np.ndarray) -> tuple[float, np.ndarray]:
    # largest eigenvalue of c*I - S on the complement of the stationary direction
    n = sym.shape[0]
    c = float(abs(sym).sum(axis=1).max())

    def matvec(x):
        x = np.ravel(x)
        x = x - top * (top @ x)
        y = c * x - sym @ x
        return y - top * (top @ y)

    op = spla.LinearOperator((n, n), matvec=matvec, dtype=float)
    start = np.random.default_rng(0).standard_normal(n)
    w, v = spla.eigsh(op, k=1, which="LA", tol=1e-14, v0=start)
    return c - float(w[0]), v[:, 0]


def relaxation_time(chain: FiniteChain) -> float:
    return spectral_gap(chain).relaxation


def power_iteration_gap(chain: FiniteChain, iters: int = 200000, tol: float = 1e-14, seed: int = 0) -> float:
    """Gap by deflated power iteration (an independent check of the eigensolver).

    Iterates M = I - S/c with c >= lambda_max, so M is positive semidefinite
    and its top eigenvalue off the stationary direction is 1 - gap/c.
    """
    sym = _symmetrised(chain).toarray()
    n = sym.shape[0]
    c = float(np.max(np.sum(np.abs(sym), axis=1)))
    m = np.eye(n) - sym / c
    top = np.sqrt(chain.stationary)
    x = np.random.default_rng(seed).standard_normal(n)
    prev = math.inf
    for _ in range(iters):
        x -= top * (top @ x)
        x = m @ x
        x /= np.linalg.norm(x)
        rq = float(x @ (sym @ x))
        if abs(rq - prev) <= tol * abs(rq):
            break
        prev = rq
    return rq


def rayleigh_quotient(chain: FiniteChain, f: np.ndarray) -> tuple[float, float]:
    """(Dirichlet form, variance) of ``f`` under the chain's stationary law."""
    f = np.asarray(f, dtype=float)
    pi = chain.stationary
    off = chain.off_diagonal()
    diff = f[off.row] - f[off.col]
    dirichlet = 0.5 * float(np.sum(pi[off.row] * off.data * diff * diff))
    mean = float(pi @ f)
    variance = float(pi @ (f - mean) ** 2)
    return dirichlet, variance


def tv_distance(nu: np.ndarray, pi: np.ndarray) -> float:
    nu = np.asarray(nu, dtype=float)
    pi = np.asarray(pi, dtype=float)
    if nu.shape != pi.shape:
        raise ValueError("distributions have different supports")
    for name, p in (("nu", nu), ("pi", pi)):
        if np.any(p < -1e-15) or abs(p.sum() - 1.0) > 1e-12:
            raise ValueError(f"{name} is not a probability vector")
    return 0.5 * float(np.abs(nu - pi).sum())


class _Propagator:
    """Exact heat-kernel rows via the eigendecomposition of the symmetrised generator."""

    def __init__(self, chain: FiniteChain, discrete: float | None = None):
        sym = _symmetrised(chain).toarray()
        self.w, self.v = scipy.linalg.eigh(sym)
        self.s = np.sqrt(chain.stationary)
        self.pi = chain.stationary
        self.discrete = discrete

    def worst_tv(self, t: float) -> float:
        if self.discrete is None:
            e = np.exp(-self.w * t)
        else:
            e = (1.0 - self.w / self.discrete) ** int(t)
        # kernel[x, y] = s_y / s_x * sum_k v_xk e_k v_yk
        k = (self.v * e) @ self.v.T
        k = k * self.s[None, :] / self.s[:, None]
        return 0.5 * float(np.max(np.abs(k - self.pi[None, :]).sum(axis=1)))


def mixing_time(chain: FiniteChain, rel_tol: float = 1e-3, threshold: float = 0.25) -> float:
    """Smallest t with worst-start TV distance below ``threshold`` (continuous time)."""
    if chain.n == 1:
        return 0.0
    if not is_ergodic(chain):
        raise NotErgodic("mixing time of a non-ergodic chain is infinite")
    if chain.n > MIXING_LIMIT:
        raise ValueError(f"mixing time is computed exactly only up to {MIXING_LIMIT} states")
    prop = _Propagator(chain)
    gap = float(np.sort(prop.w)[1])
    hi = 0.1 / gap
    while prop.worst_tv(hi) >= threshold:
        hi *= 2.0
    lo = 0.0
    while hi - lo > rel_tol * hi * 0.5:
        mid = 0.5 * (lo + hi)
        if prop.worst_tv(mid) < threshold:
            hi = mid
        else:
            lo = mid
    return hi


def uniformization_rate(chain: FiniteChain) -> float:
    return float(np.max(-chain.generator.diagonal()))


def discrete_mixing_time(chain: FiniteChain, clock_rate: float, threshold: float = 0.25) -> int:
    """Steps needed by P = I + L / clock_rate to get within ``threshold`` of stationarity."""
    if chain.n == 1:
        return 0
    if clock_rate < uniformization_rate(chain) - 1e-12:
        raise ValueError("clock rate below the largest exit rate")
    prop = _Propagator(chain, discrete=clock_rate)
    hi = 1
    while prop.worst_tv(hi) >= threshold:
        hi *= 2
    lo = hi // 2
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if prop.worst_tv(mid) < threshold:
            hi = mid
        else:
            lo = mid
    return hi


def discrete_comparison_factor(site_rates: Sequence[float], k: int) -> float:
    """Clock rate k * sum(p_i) relating discrete single-site steps to continuous time.

    One discrete step picks a site with probability proportional to its rate
    and proposes a uniform colour, i.e. P = I + L / (k * sum p_i).  With the
    default p_i = 1/k the factor is the number of sites.
    """
    return float(k * sum(site_rates))
