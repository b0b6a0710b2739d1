"""Regression bases: truncated Hermite products, scaled monomials for
geometric Brownian motion, closed-form Gram matrices, and evaluators for the
tail/singular-value/approximation bounds attached to them."""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.special import erfc, gammaln

from .chain import MarkovChainSpec, image_measure, sample_paths
from .errors import SingularGram

KIND_GENERIC = "generic"
KIND_HERMITE = "hermite-truncated"
KIND_GBM = "gbm-monomial-truncated"

DEFAULT_GRAM_CAP = 1 << 20


def hermite(order: int, x):
    """Physicists' Hermite polynomial H_order, by the three-term recurrence."""
    if order < 0:
        raise ValueError("order must be non-negative")
    x = np.asarray(x, dtype=float)
    prev = np.ones_like(x)
    if order == 0:
        return prev if prev.shape else float(prev)
    cur = 2.0 * x
    for k in range(1, order):
        prev, cur = cur, 2.0 * x * cur - 2.0 * k * prev
    return cur if cur.shape else float(cur)


def _hermite_rows(max_order: int, x: np.ndarray) -> np.ndarray:
    """Rows 0..max_order of Hermite values at the points of x."""
    out = np.empty((max_order + 1,) + x.shape, dtype=float)
    out[0] = 1.0
    if max_order >= 1:
        out[1] = 2.0 * x
    for k in range(1, max_order):
        out[k + 1] = 2.0 * x * out[k] - 2.0 * k * out[k - 1]
    return out


def _log_hermite_normalizer(order: int) -> float:
    # log of 1/sqrt(order! * 2^order); log-space keeps large orders finite.
    return -0.5 * (gammaln(order + 1) + order * math.log(2.0))


@dataclass(frozen=True, eq=False)
class BasisSpec:
    """A per-step family of regression functions with shared dimension."""

    kind: str
    size: int
    horizon: int
    evaluator: Callable[[float, np.ndarray], np.ndarray] = field(repr=False)
    degree: int | None = None
    cube_radius: float | None = None
    multi_indices: tuple[tuple[int, ...], ...] | None = None
    l2_bound: float | None = None

    def evaluate(self, t: float, points: np.ndarray) -> np.ndarray:
        """(n, size) matrix of basis values at step t on the given points."""
        points = np.atleast_2d(np.asarray(points, dtype=float))
        out = self.evaluator(t, points)
        if out.shape != (points.shape[0], self.size):
            raise ValueError("evaluator returned a wrongly shaped matrix")
        return out


def hermite_multi_indices(dim: int, degree: int) -> tuple[tuple[int, ...], ...]:
    """Multi-indices with entries in 0..degree summing to at most degree."""
    return tuple(k for k in itertools.product(range(degree + 1), repeat=dim) if sum(k) <= degree)


def hermite_basis(dim: int, degree: int, horizon: int, cube_radius: float) -> BasisSpec:
    """Normalized Hermite products in x/sqrt(2t), zeroed outside the cube
    of half-width cube_radius; orthonormal under the Gaussian step marginals."""
    if degree < 0 or cube_radius <= 0:
        raise ValueError("degree must be >= 0 and cube_radius positive")
    indices = hermite_multi_indices(dim, degree)
    log_norms = np.array([[_log_hermite_normalizer(k) for k in idx] for idx in indices])

    def evaluator(t: float, points: np.ndarray) -> np.ndarray:
        scaled = points / math.sqrt(2.0 * t)
        rows = _hermite_rows(degree, scaled)  # (degree+1, n, dim)
        inside = np.all(np.abs(points) <= cube_radius, axis=1)
        out = np.empty((points.shape[0], len(indices)))
        for j, idx in enumerate(indices):
            vals = np.ones(points.shape[0])
            for axis, k in enumerate(idx):
                vals = vals * rows[k, :, axis] * math.exp(log_norms[j, axis])
            out[:, j] = np.where(inside, vals, 0.0)
        return out

    return BasisSpec(kind=KIND_HERMITE, size=len(indices), horizon=horizon,
                     evaluator=evaluator, degree=degree, cube_radius=cube_radius,
                     multi_indices=indices, l2_bound=1.0)


def gbm_multi_indices(dim: int, degree: int) -> tuple[tuple[int, ...], ...]:
    return tuple(itertools.product(range(degree + 1), repeat=dim))


def gbm_basis(dim: int, degree: int, horizon: int, cube_radius: float) -> BasisSpec:
    """Monomials x^k scaled by exp(-k(k-1)t/2) per coordinate, zeroed outside
    the cube; their exact Gram under log-normal marginals is Vandermonde."""
    if degree < 0 or cube_radius <= 0:
        raise ValueError("degree must be >= 0 and cube_radius positive")
    indices = gbm_multi_indices(dim, degree)

    def evaluator(t: float, points: np.ndarray) -> np.ndarray:
        inside = np.all(np.abs(points) <= cube_radius, axis=1)
        out = np.empty((points.shape[0], len(indices)))
        for j, idx in enumerate(indices):
            vals = np.ones(points.shape[0])
            for axis, k in enumerate(idx):
                if k:
                    vals = vals * points[:, axis] ** k * math.exp(-k * (k - 1) * t / 2.0)
            out[:, j] = np.where(inside, vals, 0.0)
        return out

    ell = math.exp(degree * degree * horizon * dim / 2.0)
    return BasisSpec(kind=KIND_GBM, size=len(indices), horizon=horizon,
                     evaluator=evaluator, degree=degree, cube_radius=cube_radius,
                     multi_indices=indices, l2_bound=ell)


def constant_basis(horizon: int) -> BasisSpec:
    def evaluator(t: float, points: np.ndarray) -> np.ndarray:
        return np.ones((points.shape[0], 1))

    return BasisSpec(kind=KIND_GENERIC, size=1, horizon=horizon,
                     evaluator=evaluator, degree=0, l2_bound=1.0)


def monomial_basis(dim: int, degree: int, horizon: int) -> BasisSpec:
    """Plain multivariate monomials up to total degree, untruncated."""
    indices = hermite_multi_indices(dim, degree)

    def evaluator(t: float, points: np.ndarray) -> np.ndarray:
        out = np.ones((points.shape[0], len(indices)))
        for j, idx in enumerate(indices):
            for axis, k in enumerate(idx):
                if k:
                    out[:, j] *= points[:, axis] ** k
        return out

    return BasisSpec(kind=KIND_GENERIC, size=len(indices), horizon=horizon,
                     evaluator=evaluator, degree=degree, multi_indices=indices)


def indicator_basis(chain: MarkovChainSpec) -> BasisSpec:
    """One indicator per grid slot; spans every function on equal-size grids."""
    sizes = {chain.n_states(t) for t in range(1, chain.horizon + 1)}
    if len(sizes) != 1:
        raise ValueError("indicator basis needs equally sized grids")
    size = sizes.pop()
    grids = {t: chain.grid(t) for t in range(1, chain.horizon + 1)}

    def evaluator(t: float, points: np.ndarray) -> np.ndarray:
        grid = grids[int(t)]
        out = np.zeros((points.shape[0], size))
        for i, p in enumerate(points):
            j = int(np.argmin(np.linalg.norm(grid - p[None, :], axis=1)))
            out[i, j] = 1.0
        return out

    return BasisSpec(kind=KIND_GENERIC, size=size, horizon=chain.horizon, evaluator=evaluator)


def vandermonde_gram(degree: int, dim: int, t: float) -> np.ndarray:
    """Tensor power of the Vandermonde-structured matrix with entries e^{klt}."""
    base = np.exp(np.outer(np.arange(degree + 1), np.arange(degree + 1)) * t)
    out = base
    for _ in range(dim - 1):
        out = np.kron(out, base)
    return out


def closed_form_gram(basis: BasisSpec, t: float) -> np.ndarray | None:
    """Exact untruncated Gram matrix at step t, when the kind has one."""
    if basis.kind == KIND_HERMITE:
        return np.eye(basis.size)
    if basis.kind == KIND_GBM:
        dim = len(basis.multi_indices[0])
        return vandermonde_gram(basis.degree, dim, t)
    return None


@dataclass(frozen=True)
class GramResult:
    matrix: np.ndarray
    mode: str  # "exact" or "sampled"


def gram_matrix(basis: BasisSpec, chain: MarkovChainSpec, t: int,
                cap: int = DEFAULT_GRAM_CAP, seed=None, samples: int = 100_000) -> GramResult:
    """Gram matrix of the basis under the step-t marginal.

    Exact summation over the grid when it fits under the cap, otherwise a
    seeded Monte Carlo estimate; the mode used is recorded in the result.
    """
    if chain.n_states(t) <= cap:
        measure = image_measure(chain, t)
        mat = basis.evaluate(t, measure.points)
        gram = (mat * measure.masses[:, None]).T @ mat
        return GramResult(matrix=gram, mode="exact")
    idx = sample_paths(chain, samples, seed)[:, t - 1]
    pts = chain.grid(t)[idx]
    mat = basis.evaluate(t, pts)
    return GramResult(matrix=mat.T @ mat / samples, mode="sampled")


def l2_norm_bound(basis: BasisSpec, chain: MarkovChainSpec) -> float:
    """Exact max over steps and members of the L2(marginal) norm."""
    worst = 0.0
    for t in range(1, chain.horizon):
        measure = image_measure(chain, t)
        mat = basis.evaluate(t, measure.points)
        norms = np.sqrt(np.sum(measure.masses[:, None] * mat * mat, axis=0))
        worst = max(worst, float(norms.max()))
    return worst


def sup_norm_bound(basis: BasisSpec, chain: MarkovChainSpec) -> float:
    """Exact max over steps and members of |e| on the grids (almost-sure bound)."""
    worst = 0.0
    for t in range(1, chain.horizon):
        mat = basis.evaluate(t, chain.grid(t))
        worst = max(worst, float(np.abs(mat).max()))
    return worst


def validate_linear_independence(basis: BasisSpec, chain: MarkovChainSpec,
                                 tol: float = 1e-12) -> float:
    """Smallest sigma_min of the exact per-step Gram matrices; raises when 0."""
    worst = math.inf
    for t in range(1, chain.horizon):
        gram = gram_matrix(basis, chain, t).matrix
        smin = float(np.linalg.svd(gram, compute_uv=False)[-1])
        if smin <= tol:
            raise SingularGram(t, smin)
        worst = min(worst, smin)
    return worst


def _hermite_sum_identity(order: int, x: float) -> float:
    # (H_{order+1}^2 - H_order H_{order+2}) / 2, always positive.
    h = _hermite_rows(order + 2, np.asarray([x], dtype=float))[:, 0]
    return 0.5 * (h[order + 1] ** 2 - h[order] * h[order + 2])


def hermite_tail_bound(k: int, l: int, cube_radius: float) -> tuple[float, float]:
    """Upper bounds on |integral over [cube_radius, inf) of H_k H_l e^{-x^2}|.

    Returns (exact-form bound, simplified bound), the exact form built from
    complementary-error and Hermite values. Caller must order l <= k. The
    Hermite-value term keeps the full positive combination
    (H_{j+1}^2 - H_j H_{j+2})/2: dropping the cross product is unsound near
    zeros of H_{j+1}.
    """
    if l > k:
        raise ValueError("arguments must be ordered l <= k")
    if cube_radius <= 0:
        raise ValueError("cube_radius must be positive")
    lam = float(cube_radius)
    if k == l:
        exact = (math.exp(gammaln(k + 1) + k * math.log(2.0)) * (math.sqrt(math.pi) / 2.0)
                 * erfc(lam)
                 + math.exp(-lam * lam) * _hermite_sum_identity(k, lam))
    else:
        exact = math.exp(-lam * lam) * math.sqrt(
            _hermite_sum_identity(l, lam) * _hermite_sum_identity(k - 1, lam))
    log_simple = ((2 + (k + l) / 2.0) * math.log(2.0)
                  + 0.5 * (gammaln(k + 2) + gammaln(l + 2))
                  + (math.sqrt(2.0 * (k + 1)) + math.sqrt(2.0 * (l + 1))) * lam
                  - lam * lam)
    return float(exact), float(math.exp(log_simple))


def gbm_tail_bound(k: int, cube_radius: float, t: float) -> float:
    """Upper bound on the log-normal tail integral of x^{k-1} beyond cube_radius.

    Tight only in the regime ln(cube_radius) >= t*(k - 1/2); below it the
    Gaussian-tail inequality behind the formula does not apply.
    """
    if cube_radius <= 0 or t <= 0 or k < 0:
        raise ValueError("need cube_radius > 0, t > 0, k >= 0")
    lam = float(cube_radius)
    expo = (t / 2.0) * k * (k - 1) - (1.0 / (2.0 * t)) * (math.log(lam) - t * (k - 0.5)) ** 2
    return 0.5 * math.exp(expo)


def vandermonde_sigma_min_bound(degree: int, dim: int, t: float) -> tuple[float, float]:
    """Upper bounds on 1/sigma_min of the e^{klt} Gram tensor power.

    Returns (sharper, simplified); the sharper bound is the smaller of the two
    only for t >= 1.
    """
    if degree < 1 or dim < 1 or t <= 0:
        raise ValueError("need degree >= 1, dim >= 1, t > 0")
    q, d = degree, dim
    et = math.exp(t)
    sharp = (math.exp(2.0 * math.e * d / (et - 1.0) ** 2)
             * q**d * (q + 1) ** d * (et / (et - 1.0)) ** (q * d))
    simple = math.exp(3.0 * q * d) * q ** (2 * d)
    return float(sharp), float(simple)


def jackson_smooth_bound(degree: int, smoothness: int, const: float) -> float:
    """Best-uniform-error bound const * degree^-smoothness for C^n targets."""
    if not degree > smoothness >= 1:
        raise ValueError("need degree > smoothness >= 1")
    return const * degree ** (-smoothness)


def jackson_lipschitz_bound(degree: int, dim: int, cube_radius: float,
                            lipschitz_const: float) -> float:
    """Best-uniform-error bound 88*radius*C_L*d/(d+degree) for Lipschitz targets."""
    if lipschitz_const <= 0 or cube_radius <= 0:
        raise ValueError("need positive Lipschitz constant and cube radius")
    return 88.0 * cube_radius * lipschitz_const * dim / (dim + degree)


def hermite_gram_identity_bound(degree: int, dim: int, t: float, cube_radius: float) -> float:
    """Tail-derived bound on ||A - I||_2 for the truncated Hermite Gram.

    Per-entry deviations are summed coordinate-wise from the simplified
    one-sided tail bounds (each normalized factor has magnitude at most 1),
    then assembled into a Frobenius bound.
    """
    indices = hermite_multi_indices(dim, degree)
    lam_scaled = cube_radius / math.sqrt(2.0 * t)
    # Normalized one-coordinate two-sided tail bound for each (k, l) pair.
    pair = np.empty((degree + 1, degree + 1))
    for k in range(degree + 1):
        for l in range(k + 1):
            _, simple = hermite_tail_bound(k, l, lam_scaled)
            log_norm = _log_hermite_normalizer(k) + _log_hermite_normalizer(l)
            val = 2.0 / math.sqrt(math.pi) * simple * math.exp(log_norm)
            pair[k, l] = pair[l, k] = val
    total_sq = 0.0
    for a in indices:
        for b in indices:
            entry = sum(min(pair[ka, kb], 2.0) for ka, kb in zip(a, b))
            total_sq += entry * entry
    return math.sqrt(total_sq)
