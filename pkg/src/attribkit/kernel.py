"""Kernel SHAP: coalition sampling, kernel weighting and a constrained WLS fit."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .core import DataError, Dataset, Explanation, as_predictor, background_rows, evaluate
from .game import masked_expectations

DEFAULT_BUDGET = 2048
# above this many masks a layer is sampled by rejection instead of enumerated
_ENUMERATE_LIMIT = 200_000


class RankDeficientError(np.linalg.LinAlgError):
    """The coalition design does not determine all coefficients."""


@dataclass(frozen=True)
class KernelConfig:
    budget: int | None = None
    seed: int = 0
    weighting: str = "shap_kernel"
    sigma: float = 1.0
    background_cap: int | None = 128

    def __post_init__(self):
        if self.budget is not None and self.budget < 2:
            raise ValueError("budget must be at least 2")
        if self.weighting not in ("shap_kernel", "lime_proximity"):
            raise ValueError(f"unknown weighting {self.weighting!r}")
        if self.weighting == "lime_proximity" and not self.sigma > 0:
            raise ValueError("sigma must be positive for lime_proximity")

    def budget_for(self, p: int) -> int:
        full = (1 << p) - 2 if p < 62 else 1 << 62
        return min(full, DEFAULT_BUDGET) if self.budget is None else self.budget


def shap_kernel_weight(p: int, s: int) -> float:
    """``(p-1) / (C(p,s) * s * (p-s))``; undefined (infinite) at ``s`` in {0, p}."""
    if p < 2:
        raise ValueError("need at least 2 features")
    if s <= 0 or s >= p:
        raise ValueError(f"coalition size {s} has infinite weight; enforce it as a constraint")
    return (p - 1) / (math.comb(p, s) * s * (p - s))


def lime_proximity(x, z, sigma: float) -> float:
    """Exponential kernel ``exp(-||x - z||^2 / sigma^2)``."""
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    x = np.asarray(x, dtype=float)
    z = np.asarray(z, dtype=float)
    if x.shape != z.shape:
        raise ValueError("x and z differ in length")
    d2 = float(np.sum((x - z) ** 2))
    return math.exp(-d2 / sigma**2)


@dataclass(frozen=True)
class CoalitionSet:
    """Sampled coalitions and their regression weights.

    ``weights`` already fold in multiplicity and, for a partially sampled
    size layer, spread that layer's total kernel mass over its drawn masks.
    """

    masks: np.ndarray
    multiplicity: np.ndarray
    weights: np.ndarray
    complete: bool

    def __len__(self):
        return self.masks.shape[0]


def _layer(p: int, s: int) -> np.ndarray:
    out = np.zeros((math.comb(p, s), p), dtype=bool)
    for r, combo in enumerate(itertools.combinations(range(p), s)):
        out[r, list(combo)] = True
    return out


def _sample_layers(p: int, sizes: list[int], count: int, rng: np.random.Generator) -> np.ndarray:
    """``count`` distinct masks drawn uniformly from the union of the given size layers."""
    total = sum(math.comb(p, s) for s in sizes)
    if total <= _ENUMERATE_LIMIT:
        pool = np.concatenate([_layer(p, s) for s in sizes])
        pick = np.sort(rng.choice(total, size=count, replace=False))
        return pool[pick]
    # layer sizes proportional to their populations, then rejection within each
    probs = np.array([math.comb(p, s) for s in sizes], dtype=float) / total
    seen: set[bytes] = set()
    rows = []
    while len(rows) < count:
        s = sizes[rng.choice(len(sizes), p=probs)]
        m = np.zeros(p, dtype=bool)
        m[rng.choice(p, size=s, replace=False)] = True
        key = m.tobytes()
        if key not in seen:
            seen.add(key)
            rows.append(m)
    rows.sort(key=lambda m: (int(m.sum()), tuple(np.flatnonzero(m))))
    return np.array(rows)


def enumerate_coalitions(p: int, budget: int, seed: int = 0) -> CoalitionSet:
    """Coalitions for the regression, filling size layers from the extremes inward.

    With ``2**p - 2 <= budget`` every non-empty proper coalition appears
    exactly once.  Otherwise whole layer pairs ``(s, p-s)`` are taken for
    ``s = 1, 2, ...`` while they fit, and the first pair that does not fit is
    sampled uniformly without replacement.  The empty and full coalitions are
    never emitted.
    """
    if p < 2:
        raise ValueError("need at least 2 features")
    if budget < 2:
        raise ValueError("budget must be at least 2")
    rng = np.random.default_rng(seed)
    blocks, weights = [], []
    remaining = budget
    complete = True
    for s in range(1, p // 2 + 1):
        sizes = [s] if 2 * s == p else [s, p - s]
        n_pair = sum(math.comb(p, k) for k in sizes)
        if n_pair <= remaining:
            for k in sizes:
                layer = _layer(p, k)
                blocks.append(layer)
                weights.append(np.full(len(layer), shap_kernel_weight(p, k)))
            remaining -= n_pair
            continue
        complete = False
        if remaining > 0:
            drawn = _sample_layers(p, sizes, remaining, rng)
            # kernel mass of the whole pair, shared by the drawn masks
            mass = sum((p - 1) / (k * (p - k)) for k in sizes)
            blocks.append(drawn)
            weights.append(np.full(len(drawn), mass / len(drawn)))
        break
    masks = np.concatenate(blocks) if blocks else np.zeros((0, p), dtype=bool)
    w = np.concatenate(weights) if weights else np.zeros(0)
    return CoalitionSet(masks=masks, multiplicity=np.ones(len(masks), dtype=np.int64), weights=w, complete=complete)


def solve_constrained_wls(
    design: np.ndarray,
    targets: np.ndarray,
    weights: np.ndarray,
    total,
) -> np.ndarray:
    """Weighted least squares with coefficients constrained to sum to ``total``.

    The last coefficient is eliminated through the constraint.  ``targets``
    may be ``(m,)`` or ``(m, K)`` with ``total`` of matching trailing shape.
    """
    X = np.asarray(design, dtype=float)
    y = np.asarray(targets, dtype=float)
    w = np.asarray(weights, dtype=float)
    squeeze = y.ndim == 1
    if squeeze:
        y = y[:, None]
    total = np.atleast_1d(np.asarray(total, dtype=float))
    m, p = X.shape
    if y.shape[0] != m or w.shape != (m,):
        raise ValueError("design, targets and weights disagree in row count")
    if np.any(w <= 0):
        raise ValueError("weights must be positive")
    if p == 1:
        phi = total[None, :].copy()
        return phi[:, 0] if squeeze else phi
    A = X[:, :-1] - X[:, -1:]
    b = y - X[:, -1:] * total[None, :]
    sw = np.sqrt(w)[:, None]
    Aw, bw = A * sw, b * sw
    coef, _, rank, _ = np.linalg.lstsq(Aw, bw, rcond=None)
    if rank < p - 1:
        raise RankDeficientError(
            f"coalition design has rank {rank} < {p - 1}; too few distinct coalitions"
        )
    last = total - coef.sum(axis=0)
    phi = np.vstack([coef, last[None, :]])
    return phi[:, 0] if squeeze else phi


def kernel_shap_explain(
    model,
    instance: np.ndarray,
    background: Dataset | np.ndarray,
    config: KernelConfig = KernelConfig(),
    feature_names=None,
    n_jobs: int | None = None,
) -> Explanation:
    model = as_predictor(model)
    x = np.asarray(instance, dtype=float).ravel()
    p = x.size
    Z = background_rows(background, config.background_cap, config.seed)
    if Z.shape[1] != p:
        raise DataError(f"instance has {p} features, background has {Z.shape[1]}")
    names = tuple(feature_names) if feature_names is not None else (
        background.feature_names if isinstance(background, Dataset) else tuple(f"x{i}" for i in range(p))
    )
    base = evaluate(model, Z, n_jobs).mean(axis=0)
    pred = evaluate(model, x[None, :], n_jobs)[0]
    budget = config.budget_for(p)
    diagnostics = {
        "budget": int(budget),
        "seed": int(config.seed),
        "weighting": config.weighting,
        "background_rows": int(Z.shape[0]),
    }
    if p == 1:
        return Explanation(base, (pred - base)[None, :], names, "kernel", pred, {**diagnostics, "coalitions": 0})

    coalitions = enumerate_coalitions(p, budget, config.seed)
    if config.weighting == "shap_kernel":
        weights = coalitions.weights
    else:
        # distance of each coalition from the full coalition in the binary space
        ones = np.ones(p)
        weights = np.array([lime_proximity(ones, m.astype(float), config.sigma) for m in coalitions.masks])
    values = masked_expectations(model, x, Z, coalitions.masks, n_jobs) - base[None, :]
    phi = solve_constrained_wls(coalitions.masks.astype(float), values, weights, pred - base)
    diagnostics.update(coalitions=len(coalitions), complete_enumeration=coalitions.complete)
    return Explanation(base, phi, names, "kernel", pred, diagnostics)
