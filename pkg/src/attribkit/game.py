"""Coalition games: masking games built from a model, plus synthetic games.

A coalition is a boolean mask over players (``True`` = present).  Integer
encodings use bit ``i`` for player ``i``.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .core import DataError, Dataset, Predictor, as_predictor, background_rows, evaluate

# rows per model call when expanding coalitions over the background
_ROWS_PER_BLOCK = 1 << 16


def all_masks(n: int) -> np.ndarray:
    """Every coalition of ``n`` players as a ``(2**n, n)`` bool array in integer order."""
    ints = np.arange(1 << n, dtype=np.int64)
    return ((ints[:, None] >> np.arange(n)) & 1).astype(bool)


def mask_to_int(masks: np.ndarray) -> np.ndarray:
    masks = np.atleast_2d(np.asarray(masks, dtype=bool))
    return (masks.astype(np.int64) << np.arange(masks.shape[1])).sum(axis=1)


class CoalitionGame:
    """Characteristic function over ``n_players`` with ``v(empty) == 0``.

    ``fn`` maps a ``(m, n)`` bool array to ``m`` reals.  Its value on the
    empty coalition is subtracted, so the normalisation holds by
    construction rather than by assertion.
    """

    def __init__(self, n_players: int, fn: Callable[[np.ndarray], np.ndarray]):
        if n_players < 1:
            raise ValueError("a game needs at least one player")
        self.n_players = int(n_players)
        self._fn = fn
        self._offset = float(np.asarray(fn(np.zeros((1, n_players), dtype=bool)), dtype=float).ravel()[0])

    def values(self, masks: np.ndarray) -> np.ndarray:
        masks = np.atleast_2d(np.asarray(masks, dtype=bool))
        if masks.shape[1] != self.n_players:
            raise ValueError(f"mask length {masks.shape[1]} != {self.n_players} players")
        out = np.asarray(self._fn(masks), dtype=float).ravel() - self._offset
        out[~masks.any(axis=1)] = 0.0
        return out

    def value(self, mask: Sequence[bool] | np.ndarray) -> float:
        return float(self.values(np.asarray(mask, dtype=bool)[None, :])[0])

    def value_table(self) -> np.ndarray:
        """Values of all ``2**n`` coalitions, indexed by integer mask."""
        return self.values(all_masks(self.n_players))

    def __add__(self, other: "CoalitionGame") -> "CoalitionGame":
        if other.n_players != self.n_players:
            raise ValueError("games must have the same player count")
        return CoalitionGame(self.n_players, lambda m: self.values(m) + other.values(m))

    def scaled(self, c: float) -> "CoalitionGame":
        return CoalitionGame(self.n_players, lambda m: c * self.values(m))


class TabularGame(CoalitionGame):
    """Game given by an explicit table of ``2**n`` values (integer-mask order)."""

    def __init__(self, table: Sequence[float] | np.ndarray):
        table = np.asarray(table, dtype=float)
        n = int(round(np.log2(table.size)))
        if table.ndim != 1 or table.size != 1 << n or n < 1:
            raise ValueError("table length must be 2**n with n >= 1")
        if table[0] != 0.0:
            raise ValueError("v(empty) must be 0")
        self.table = table
        super().__init__(n, lambda m: self.table[mask_to_int(m)])

    def value_table(self) -> np.ndarray:
        return self.table.copy()


def compose(instance: np.ndarray, mask: np.ndarray, background_row: np.ndarray) -> np.ndarray:
    """Take ``instance`` where ``mask`` is set and ``background_row`` elsewhere."""
    x = np.asarray(instance, dtype=float)
    m = np.asarray(mask, dtype=bool)
    z = np.asarray(background_row, dtype=float)
    if not (x.shape == m.shape == z.shape):
        raise ValueError(f"length mismatch: {x.shape}, {m.shape}, {z.shape}")
    return np.where(m, x, z)


def masked_expectations(
    model: Predictor,
    instance: np.ndarray,
    background: np.ndarray,
    masks: np.ndarray,
    n_jobs: int | None = None,
) -> np.ndarray:
    """``E_z f(compose(x, S, z))`` for every mask; shape ``(m, K)``."""
    x = np.asarray(instance, dtype=float)
    Z = np.asarray(background, dtype=float)
    masks = np.atleast_2d(np.asarray(masks, dtype=bool))
    B = Z.shape[0]
    per_block = max(1, _ROWS_PER_BLOCK // B)
    out = np.empty((masks.shape[0], model.n_outputs))
    for s in range(0, masks.shape[0], per_block):
        blk = masks[s : s + per_block]
        rows = np.where(blk[:, None, :], x[None, None, :], Z[None, :, :])
        pred = evaluate(model, rows.reshape(-1, x.size), n_jobs)
        out[s : s + len(blk)] = pred.reshape(len(blk), B, -1).mean(axis=1)
    return out


class MaskingGame(CoalitionGame):
    """Interventional game of one model output at one instance.

    ``v(S) = mean_z f(x_S, z_rest)[k] - mean_z f(z)[k]`` over the background
    rows ``z``.
    """

    def __init__(
        self,
        model,
        instance: np.ndarray,
        background: Dataset | np.ndarray,
        output_index: int = 0,
        background_cap: int | None = 128,
        seed: int = 0,
        n_jobs: int | None = None,
    ):
        self.model = as_predictor(model)
        self.instance = np.asarray(instance, dtype=float).ravel()
        self.background = background_rows(background, background_cap, seed)
        if self.background.shape[1] != self.instance.size:
            raise DataError(
                f"instance has {self.instance.size} features, background has {self.background.shape[1]}"
            )
        if not 0 <= output_index < self.model.n_outputs:
            raise ValueError(f"output_index {output_index} out of range for {self.model.n_outputs} outputs")
        self.output_index = output_index
        self.n_jobs = n_jobs
        self.base_value = float(evaluate(self.model, self.background, n_jobs)[:, output_index].mean())
        self.prediction = float(evaluate(self.model, self.instance[None, :], n_jobs)[0, output_index])
        # offset is v_raw(empty) == base value
        super().__init__(self.instance.size, self._raw)

    def _raw(self, masks: np.ndarray) -> np.ndarray:
        masks = np.atleast_2d(masks)
        out = np.empty(masks.shape[0])
        empty = ~masks.any(axis=1)
        out[empty] = self.base_value
        if np.any(~empty):
            e = masked_expectations(self.model, self.instance, self.background, masks[~empty], self.n_jobs)
            out[~empty] = e[:, self.output_index]
        return out


def make_masking_game(
    model,
    instance: np.ndarray,
    background: Dataset | np.ndarray,
    output_index: int = 0,
    background_cap: int | None = 128,
    seed: int = 0,
) -> MaskingGame:
    return MaskingGame(model, instance, background, output_index, background_cap, seed)


def additive_game(a: Sequence[float]) -> CoalitionGame:
    a = np.asarray(a, dtype=float)
    if a.size == 0:
        raise ValueError("additive game needs at least one player")
    return CoalitionGame(a.size, lambda m: m.astype(float) @ a)


def unanimity_game(n: int, carrier: Sequence[int]) -> CoalitionGame:
    """``v(S) = 1`` iff ``S`` contains every player of ``carrier`` (0-based)."""
    carrier = sorted(set(int(i) for i in carrier))
    if not carrier:
        raise ValueError("unanimity carrier must be non-empty")
    if n < 1 or carrier[0] < 0 or carrier[-1] >= n:
        raise ValueError("carrier players out of range")
    return CoalitionGame(n, lambda m: m[:, carrier].all(axis=1).astype(float))


def majority_game(n: int) -> CoalitionGame:
    if n < 1:
        raise ValueError("majority game needs n >= 1")
    return CoalitionGame(n, lambda m: (2 * m.sum(axis=1) > n).astype(float))


def synthetic_game(kind: str, *args) -> CoalitionGame:
    """``synthetic_game("additive", a)``, ``("unanimity", n, T)`` or ``("majority", n)``."""
    makers = {"additive": additive_game, "unanimity": unanimity_game, "majority": majority_game}
    if kind not in makers:
        raise ValueError(f"unknown synthetic game {kind!r}")
    return makers[kind](*args)


def random_game(n: int, rng: np.random.Generator) -> TabularGame:
    """Uniform[-1, 1] values on every non-empty coalition."""
    table = rng.uniform(-1.0, 1.0, size=1 << n)
    table[0] = 0.0
    return TabularGame(table)
