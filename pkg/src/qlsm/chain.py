"""Finite discrete-time Markov chains: exact enumeration, seeded sampling, and
grid discretizations of Brownian and geometric Brownian motion."""
from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np
from scipy.special import ndtr

from .errors import CapExceeded

DEFAULT_ENUMERATION_CAP = 1 << 20

_ROW_TOL = 1e-12


def _seeded_rng(seed) -> np.random.Generator:
    # Counter-based generator: independent streams for distinct seeds/offsets.
    if not isinstance(seed, np.random.SeedSequence):
        seed = np.random.SeedSequence(seed)
    return np.random.Generator(np.random.Philox(seed))


def _readonly(arr: np.ndarray) -> np.ndarray:
    out = np.array(arr, dtype=float)
    out.setflags(write=False)
    return out


@dataclass(frozen=True, eq=False)
class StepDiagnostics:
    """Measured moment errors of one marginal against its continuous target."""

    step: int
    mean_error: float
    variance_error: float
    dropped_mass: float
    tolerance: float


@dataclass(frozen=True, eq=False)
class MarkovChainSpec:
    """Time-inhomogeneous chain on finite per-step grids in R^d.

    Step 0 is the deterministic start point; steps 1..horizon carry a grid
    each, an initial distribution over the first grid and one transition
    matrix per consecutive pair of grids.
    """

    dimension: int
    horizon: int
    initial_state: np.ndarray
    grids: tuple[np.ndarray, ...]
    initial_distribution: np.ndarray
    transitions: tuple[np.ndarray, ...]
    diagnostics: tuple[StepDiagnostics, ...] | None = field(
        default=None, repr=False, compare=False
    )

    def __post_init__(self):
        if self.dimension < 1 or self.horizon < 1:
            raise ValueError("dimension and horizon must be positive")
        if len(self.grids) != self.horizon:
            raise ValueError("need one grid per step 1..horizon")
        if len(self.transitions) != self.horizon - 1:
            raise ValueError("need one transition matrix per consecutive grid pair")
        object.__setattr__(self, "initial_state", _readonly(np.atleast_1d(self.initial_state)))
        if self.initial_state.shape != (self.dimension,):
            raise ValueError("initial_state must be a d-vector")
        grids = []
        for t, g in enumerate(self.grids, start=1):
            g = _readonly(np.atleast_2d(g))
            if g.ndim != 2 or g.shape[1] != self.dimension or g.shape[0] < 1:
                raise ValueError(f"grid at step {t} must have shape (n, {self.dimension})")
            grids.append(g)
        object.__setattr__(self, "grids", tuple(grids))
        init = _readonly(self.initial_distribution)
        self._check_distribution(init, self.grids[0].shape[0], "initial distribution")
        object.__setattr__(self, "initial_distribution", init)
        mats = []
        for t, P in enumerate(self.transitions, start=1):
            P = _readonly(P)
            if P.shape != (self.n_states(t), self.n_states(t + 1)):
                raise ValueError(f"transition {t}->{t + 1} has wrong shape {P.shape}")
            for i, row in enumerate(P):
                self._check_distribution(row, P.shape[1], f"transition {t}->{t + 1} row {i}")
            mats.append(P)
        object.__setattr__(self, "transitions", tuple(mats))

    @staticmethod
    def _check_distribution(p: np.ndarray, n: int, what: str):
        if p.shape != (n,):
            raise ValueError(f"{what} has wrong length")
        if np.any(p < 0):
            raise ValueError(f"{what} has negative entries")
        if abs(float(p.sum()) - 1.0) > _ROW_TOL:
            raise ValueError(f"{what} does not sum to 1 (off by {p.sum() - 1.0:.2e})")

    def grid(self, t: int) -> np.ndarray:
        """Grid of step t, for t in 1..horizon."""
        if not 1 <= t <= self.horizon:
            raise ValueError(f"step {t} out of range 1..{self.horizon}")
        return self.grids[t - 1]

    def n_states(self, t: int) -> int:
        return self.grid(t).shape[0]

    def transition(self, t: int) -> np.ndarray:
        """Transition matrix from step t to t+1, for t in 1..horizon-1."""
        if not 1 <= t <= self.horizon - 1:
            raise ValueError(f"transition step {t} out of range")
        return self.transitions[t - 1]

    def path_space_size(self) -> int:
        size = 1
        for t in range(1, self.horizon + 1):
            size *= self.n_states(t)
        return size

    def to_json(self) -> str:
        doc = {
            "dimension": self.dimension,
            "horizon": self.horizon,
            "initial_state": self.initial_state.tolist(),
            "grids": [g.tolist() for g in self.grids],
            "initial_distribution": self.initial_distribution.tolist(),
            "transitions": [P.tolist() for P in self.transitions],
        }
        return json.dumps(doc, sort_keys=True)

    @classmethod
    def from_json(cls, doc: str | dict) -> "MarkovChainSpec":
        if isinstance(doc, str):
            doc = json.loads(doc)
        return cls(
            dimension=int(doc["dimension"]),
            horizon=int(doc["horizon"]),
            initial_state=np.asarray(doc["initial_state"], dtype=float),
            grids=tuple(np.asarray(g, dtype=float) for g in doc["grids"]),
            initial_distribution=np.asarray(doc["initial_distribution"], dtype=float),
            transitions=tuple(np.asarray(P, dtype=float) for P in doc["transitions"]),
        )


@dataclass(frozen=True, eq=False)
class Path:
    """One realization of the chain: states for steps 1..horizon and its mass."""

    states: np.ndarray
    probability: float
    indices: tuple[int, ...]


class PathEnsemble(Sequence):
    """All positive-probability paths of a chain, with vectorized accessors."""

    def __init__(self, chain: MarkovChainSpec, indices: np.ndarray, probabilities: np.ndarray):
        self.chain = chain
        self.indices = indices
        self.probabilities = probabilities
        self.indices.setflags(write=False)
        self.probabilities.setflags(write=False)

    def __len__(self) -> int:
        return self.indices.shape[0]

    def __getitem__(self, i) -> Path:
        idx = self.indices[i]
        if idx.ndim != 1:
            raise TypeError("slicing a PathEnsemble is not supported")
        states = np.stack(
            [self.chain.grid(t)[idx[t - 1]] for t in range(1, self.chain.horizon + 1)]
        )
        return Path(states=states, probability=float(self.probabilities[i]), indices=tuple(int(j) for j in idx))

    def __iter__(self) -> Iterator[Path]:
        for i in range(len(self)):
            yield self[i]

    def states_at(self, t: int) -> np.ndarray:
        """(n_paths, d) array of step-t states along every path."""
        return self.chain.grid(t)[self.indices[:, t - 1]]

    def state_indices_at(self, t: int) -> np.ndarray:
        return self.indices[:, t - 1]


def enumerate_paths(chain: MarkovChainSpec, cap: int = DEFAULT_ENUMERATION_CAP) -> PathEnsemble:
    """All paths with nonzero probability, in lexicographic grid-index order."""
    if chain.path_space_size() > cap:
        raise CapExceeded(
            f"path space has {chain.path_space_size()} elements, cap is {cap}"
        )
    probs = chain.initial_distribution.copy()
    idx = np.arange(chain.n_states(1), dtype=np.int64)[:, None]
    keep = probs > 0.0
    idx, probs = idx[keep], probs[keep]
    for t in range(1, chain.horizon):
        P = chain.transition(t)
        step_probs = P[idx[:, -1]]
        new_probs = (probs[:, None] * step_probs).ravel()
        n_next = P.shape[1]
        left = np.repeat(idx, n_next, axis=0)
        right = np.tile(np.arange(n_next, dtype=np.int64), idx.shape[0])[:, None]
        idx = np.hstack([left, right])
        keep = new_probs > 0.0
        idx, probs = idx[keep], new_probs[keep]
    return PathEnsemble(chain, idx, probs)


def sample_path(chain: MarkovChainSpec, seed) -> Path:
    """One seeded draw; identical seeds give identical paths."""
    ens_idx = _sample_index_matrix(chain, 1, _seeded_rng(seed))[0]
    prob = float(chain.initial_distribution[ens_idx[0]])
    for t in range(1, chain.horizon):
        prob *= float(chain.transition(t)[ens_idx[t - 1], ens_idx[t]])
    states = np.stack([chain.grid(t)[ens_idx[t - 1]] for t in range(1, chain.horizon + 1)])
    return Path(states=states, probability=prob, indices=tuple(int(j) for j in ens_idx))


def sample_paths(chain: MarkovChainSpec, count: int, seed) -> np.ndarray:
    """(count, horizon) matrix of grid indices; same law as repeated sample_path."""
    return _sample_index_matrix(chain, count, _seeded_rng(seed))


def _sample_index_matrix(chain: MarkovChainSpec, count: int, rng: np.random.Generator) -> np.ndarray:
    out = np.empty((count, chain.horizon), dtype=np.int64)
    cum = np.cumsum(chain.initial_distribution)
    out[:, 0] = np.searchsorted(cum, rng.random(count), side="right")
    np.clip(out[:, 0], 0, chain.n_states(1) - 1, out=out[:, 0])
    for t in range(1, chain.horizon):
        cum_rows = np.cumsum(chain.transition(t), axis=1)[out[:, t - 1]]
        u = rng.random(count)
        out[:, t] = (cum_rows < u[:, None]).sum(axis=1)
        np.clip(out[:, t], 0, chain.n_states(t + 1) - 1, out=out[:, t])
    return out


@dataclass(frozen=True, eq=False)
class DiscreteMeasure:
    """Probability masses attached to grid points."""

    points: np.ndarray
    masses: np.ndarray


def image_measure(chain: MarkovChainSpec, t: int) -> DiscreteMeasure:
    """Marginal law of the step-t state."""
    if not 1 <= t <= chain.horizon:
        raise ValueError(f"step {t} out of range 1..{chain.horizon}")
    mass = chain.initial_distribution
    for u in range(1, t):
        mass = mass @ chain.transition(u)
    return DiscreteMeasure(points=chain.grid(t), masses=mass)


def marginal_moment(chain: MarkovChainSpec, t: int, order: int, coord: int = 0) -> float:
    """Exact E[X_{t,coord}^order] under the chain's marginal at step t."""
    measure = image_measure(chain, t)
    return float(np.sum(measure.masses * measure.points[:, coord] ** order))


def _gaussian_bin(grid: np.ndarray, means: np.ndarray, sd: float) -> tuple[np.ndarray, np.ndarray]:
    """Nearest-point binning of N(mean, sd^2) onto a uniform grid.

    Mass beyond the outer half-bin edges is dropped and each row renormalized;
    returns (row-stochastic matrix, per-row dropped mass).
    """
    h = grid[1] - grid[0] if grid.size > 1 else 2.0 * (abs(grid[0]) + 1.0)
    edges = np.concatenate([[grid[0] - h / 2], (grid[:-1] + grid[1:]) / 2, [grid[-1] + h / 2]])
    cdf = ndtr((edges[None, :] - means[:, None]) / sd)
    probs = np.diff(cdf, axis=1)
    np.clip(probs, 0.0, None, out=probs)
    kept = probs.sum(axis=1)
    dropped = 1.0 - kept
    probs /= kept[:, None]
    return probs, dropped


def _product_points(grid_1d: np.ndarray, dim: int) -> np.ndarray:
    if dim == 1:
        return grid_1d[:, None]
    return np.array(list(itertools.product(grid_1d, repeat=dim)), dtype=float)


def _kron_power(mat: np.ndarray, dim: int) -> np.ndarray:
    out = mat
    for _ in range(dim - 1):
        out = np.kron(out, mat)
    return out


def _brownian_1d_parts(horizon: int, grid_size: int, support_radius: float):
    grids = [np.linspace(-support_radius * math.sqrt(t), support_radius * math.sqrt(t), grid_size)
             for t in range(1, horizon + 1)]
    init, dropped0 = _gaussian_bin(grids[0], np.zeros(1), 1.0)
    init = init[0]
    dropped = [float(dropped0[0])]
    mats = []
    for t in range(1, horizon):
        P, drop = _gaussian_bin(grids[t], grids[t - 1], 1.0)
        mats.append(P)
        dropped.append(float(drop.max()))
    return grids, init, mats, dropped


def _brownian_diagnostics(grids, init, mats, dropped, support_radius, grid_size) -> tuple[StepDiagnostics, ...]:
    out = []
    mass = init
    for t in range(1, len(grids) + 1):
        g = grids[t - 1]
        mean = float(np.sum(mass * g))
        var = float(np.sum(mass * g**2) - mean**2)
        h = g[1] - g[0] if g.size > 1 else 0.0
        # Conservative per-step quantization + truncation estimate, compounded.
        edge = support_radius * math.sqrt(t) + h / 2
        zbar = edge / math.sqrt(t)
        tail2 = 2 * t * ((1 - ndtr(zbar)) + zbar * math.exp(-zbar * zbar / 2) / math.sqrt(2 * math.pi))
        per_step = h * math.sqrt(2 * t / math.pi) + h * h / 4 + tail2 + max(dropped) * 2 * t
        tol = 2.0 * t * per_step
        out.append(StepDiagnostics(step=t, mean_error=abs(mean),
                                   variance_error=abs(var - t),
                                   dropped_mass=max(dropped[: t]),
                                   tolerance=tol))
        if t < len(grids):
            mass = mass @ mats[t - 1]
    return tuple(out)


def discretize_brownian(dim: int, horizon: int, grid_size: int,
                        support_radius: float) -> MarkovChainSpec:
    """Chain whose coordinates follow independent standard Brownian motions,
    binned to per-step uniform grids on [-support_radius*sqrt(t), +...]."""
    if grid_size < 2:
        raise ValueError("grid_size must be at least 2")
    if support_radius <= 0:
        raise ValueError("support_radius must be positive")
    grids1, init1, mats1, dropped = _brownian_1d_parts(horizon, grid_size, support_radius)
    diag = _brownian_diagnostics(grids1, init1, mats1, dropped, support_radius, grid_size)
    grids = tuple(_product_points(g, dim) for g in grids1)
    init = init1
    for _ in range(dim - 1):
        init = np.kron(init, init1)
    mats = tuple(_kron_power(P, dim) for P in mats1)
    return MarkovChainSpec(
        dimension=dim, horizon=horizon, initial_state=np.zeros(dim),
        grids=grids, initial_distribution=init, transitions=mats, diagnostics=diag,
    )


def _gbm_diagnostics(grids1, init, mats, dropped) -> tuple[StepDiagnostics, ...]:
    out = []
    mass = init
    for t in range(1, len(grids1) + 1):
        w = grids1[t - 1]
        x = np.exp(w - t / 2)
        mean = float(np.sum(mass * x))
        second = float(np.sum(mass * x**2))
        h = w[1] - w[0] if w.size > 1 else 0.0
        edge = w[-1] + h / 2
        # |d/dw e^{w-t/2}| peaks at the upper grid edge; tails are exact normal
        # integrals of e^{w-t/2} beyond the outer edges.
        quant = math.exp(edge - t / 2) * h / 2
        upper = math.exp(0.0) * (1 - ndtr((edge - t) / math.sqrt(t)))
        lower = ndtr((-edge - t) / math.sqrt(t))
        per_step = quant + upper + lower + max(dropped) * math.exp(edge - t / 2)
        tol = 2.0 * t * per_step
        out.append(StepDiagnostics(step=t, mean_error=abs(mean - 1.0),
                                   variance_error=abs((second - mean**2) - (math.exp(t) - 1.0)),
                                   dropped_mass=max(dropped[: t]),
                                   tolerance=tol))
        if t < len(grids1):
            mass = mass @ mats[t - 1]
    return tuple(out)


def discretize_gbm(dim: int, horizon: int, grid_size: int,
                   support_radius: float) -> MarkovChainSpec:
    """Chain whose coordinates follow independent geometric Brownian motions
    started at 1; grids are exponentials of the Brownian grids."""
    if grid_size < 1:
        raise ValueError("grid_size must be at least 1")
    if support_radius <= 0:
        raise ValueError("support_radius must be positive")
    if grid_size == 1:
        # Degenerate single-point chain pinned at 1.
        grids = tuple(np.ones((1, dim)) for _ in range(horizon))
        init = np.ones(1)
        mats = tuple(np.ones((1, 1)) for _ in range(horizon - 1))
        diag = tuple(StepDiagnostics(t, 0.0, abs(math.exp(t) - 1.0), 0.0, abs(math.exp(t) - 1.0) + 1e-12)
                     for t in range(1, horizon + 1))
        return MarkovChainSpec(dimension=dim, horizon=horizon, initial_state=np.ones(dim),
                               grids=grids, initial_distribution=init, transitions=mats,
                               diagnostics=diag)
    grids1, init1, mats1, dropped = _brownian_1d_parts(horizon, grid_size, support_radius)
    diag = _gbm_diagnostics(grids1, init1, mats1, dropped)
    gbm_grids1 = [np.exp(g - t / 2) for t, g in zip(range(1, horizon + 1), grids1)]
    grids = tuple(_product_points(g, dim) for g in gbm_grids1)
    init = init1
    for _ in range(dim - 1):
        init = np.kron(init, init1)
    mats = tuple(_kron_power(P, dim) for P in mats1)
    return MarkovChainSpec(
        dimension=dim, horizon=horizon, initial_state=np.ones(dim),
        grids=grids, initial_distribution=init, transitions=mats, diagnostics=diag,
    )
