"""Exact Shapley values by full enumeration.

Two independent enumerations are provided: over subsets (weighted marginal
contributions) and over orderings (average marginal contribution along
every permutation).  They serve as the oracle for the sampling estimators.
"""

from __future__ import annotations

import itertools
import math
from fractions import Fraction

import numpy as np

from .core import DataError, Dataset, Explanation, as_predictor, background_rows, evaluate
from .game import CoalitionGame, TabularGame, all_masks, masked_expectations

SUBSET_CAP = 20
PERMUTATION_CAP = 9


class TooManyPlayersError(ValueError):
    pass


def subset_weights(n: int) -> np.ndarray:
    """``|S|!(n-|S|-1)!/n!`` for ``|S| = 0..n-1``, evaluated exactly then rounded once."""
    fact = [math.factorial(k) for k in range(n + 1)]
    return np.array([float(Fraction(fact[s] * fact[n - s - 1], fact[n])) for s in range(n)])


def exact_shapley(game: CoalitionGame, cap: int = SUBSET_CAP) -> np.ndarray:
    n = game.n_players
    if n > cap:
        raise TooManyPlayersError(f"{n} players exceeds the exact-enumeration cap of {cap}")
    table = game.value_table()
    ints = np.arange(1 << n, dtype=np.int64)
    sizes = np.bitwise_count(ints).astype(np.int64)
    weights = subset_weights(n)
    phi = np.empty(n)
    for j in range(n):
        bit = np.int64(1) << j
        without = ints[(ints & bit) == 0]
        delta = table[without | bit] - table[without]
        # marginal sums per coalition size, weighted once per size
        per_size = np.bincount(sizes[without], weights=delta, minlength=n)
        phi[j] = float(np.dot(weights, per_size[:n]))
    return phi


def exact_shapley_permutation(game: CoalitionGame, cap: int = PERMUTATION_CAP) -> np.ndarray:
    n = game.n_players
    if n > cap:
        raise TooManyPlayersError(f"{n} players exceeds the permutation-enumeration cap of {cap}")
    table = game.value_table()
    perms = np.array(list(itertools.permutations(range(n))), dtype=np.int64)
    bits = np.int64(1) << perms
    after = np.cumsum(bits, axis=1)
    before = after - bits
    delta = table[after] - table[before]
    phi = np.zeros(n)
    np.add.at(phi, perms.ravel(), delta.ravel())
    return phi / math.factorial(n)


def exact_explain(
    model,
    instance: np.ndarray,
    background: Dataset | np.ndarray,
    feature_names=None,
    background_cap: int | None = 128,
    seed: int = 0,
    cap: int = SUBSET_CAP,
    n_jobs: int | None = None,
) -> Explanation:
    """Exact Shapley attribution of every model output via the masking game."""
    model = as_predictor(model)
    x = np.asarray(instance, dtype=float).ravel()
    if x.size > cap:
        raise TooManyPlayersError(f"{x.size} features exceeds the exact-enumeration cap of {cap}")
    Z = background_rows(background, background_cap, seed)
    if Z.shape[1] != x.size:
        raise DataError(f"instance has {x.size} features, background has {Z.shape[1]}")

    # one pass over all coalitions serves every output column
    masks = all_masks(x.size)
    expect = masked_expectations(model, x, Z, masks[1:], n_jobs)
    base = evaluate(model, Z, n_jobs).mean(axis=0)
    pred = evaluate(model, x[None, :], n_jobs)[0]
    phi = np.empty((x.size, model.n_outputs))
    for k in range(model.n_outputs):
        table = np.concatenate([[0.0], expect[:, k] - base[k]])
        phi[:, k] = exact_shapley(TabularGame(table), cap)
    names = tuple(feature_names) if feature_names is not None else (
        background.feature_names if isinstance(background, Dataset) else tuple(f"x{i}" for i in range(x.size))
    )
    return Explanation(
        base_value=base,
        phi=phi,
        feature_names=names,
        method="exact",
        prediction=pred,
        diagnostics={"background_rows": int(Z.shape[0]), "seed": int(seed), "coalitions": int(masks.shape[0])},
    )
