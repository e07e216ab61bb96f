"""Monte Carlo permutation estimate of Shapley values.

For feature ``j`` each sample draws a background row ``z`` and a random
ordering ``o`` of the features.  Two hybrids are built: one takes the
instance's values for ``j`` and every feature ahead of ``j`` in ``o`` (``z``
elsewhere), the other is identical except that ``j`` comes from ``z``.  The
attribution is the mean output difference between the two.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import DataError, Dataset, Explanation, as_predictor, background_rows, evaluate
from .exact import SUBSET_CAP, exact_explain


@dataclass(frozen=True)
class McConfig:
    samples: int = 2000
    seed: int = 0
    antithetic: bool = False
    sweep: bool = False

    def __post_init__(self):
        if self.samples < 1:
            raise ValueError("samples per feature must be >= 1")


_SWEEP_STREAM = 0xFFFFFFFF


def _feature_rng(seed: int, j: int) -> np.random.Generator:
    # independent stream per feature: results do not depend on evaluation order
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(j)]))


def _orderings(rng: np.random.Generator, M: int, N: int, antithetic: bool) -> np.ndarray:
    if not antithetic:
        return np.argsort(rng.random((M, N)), axis=1, kind="stable")
    half = (M + 1) // 2
    base = np.argsort(rng.random((half, N)), axis=1, kind="stable")
    return np.concatenate([base, base[:, ::-1]])[:M]


def _diffs(model, plus: np.ndarray, minus: np.ndarray, n_jobs) -> np.ndarray:
    out = evaluate(model, np.concatenate([plus, minus]), n_jobs)
    d = out[: len(plus)] - out[len(plus) :]
    # identical hybrids contribute exactly nothing
    d[np.all(plus == minus, axis=1)] = 0.0
    return d


def _feature_marginals(model, x, Z, j, M, seed, antithetic, n_jobs) -> np.ndarray:
    rng = _feature_rng(seed, j)
    zi = rng.integers(0, Z.shape[0], size=M)
    order = _orderings(rng, M, x.size, antithetic)
    rank = np.empty_like(order)
    np.put_along_axis(rank, order, np.arange(x.size)[None, :], axis=1)
    ahead = rank < rank[:, [j]]
    z = Z[zi]
    minus = np.where(ahead, x[None, :], z)
    plus = minus.copy()
    plus[:, j] = x[j]
    return _diffs(model, plus, minus, n_jobs)


def _sweep_marginals(model, x, Z, M, seed, antithetic, n_jobs) -> np.ndarray:
    """All features from shared (z, ordering) draws: ``(M, N, K)``."""
    N = x.size
    rng = _feature_rng(seed, _SWEEP_STREAM)
    zi = rng.integers(0, Z.shape[0], size=M)
    order = _orderings(rng, M, N, antithetic)
    rows = np.arange(M)
    chain = np.empty((M, N + 1, N))
    chain[:, 0] = Z[zi]
    for k in range(N):
        cols = order[:, k]
        chain[:, k + 1] = chain[:, k]
        chain[rows, k + 1, cols] = x[cols]
    out = evaluate(model, chain.reshape(-1, N), n_jobs).reshape(M, N + 1, -1)
    step = out[:, 1:] - out[:, :-1]
    same = np.all(chain[:, 1:] == chain[:, :-1], axis=2)
    step[same] = 0.0
    marg = np.empty((M, N, out.shape[2]))
    marg[np.arange(M)[:, None], order] = step
    return marg


def mc_marginals(model, instance, data, config: McConfig, n_jobs: int | None = None) -> np.ndarray:
    """Raw marginal contributions, shape ``(samples, N, K)``."""
    model = as_predictor(model)
    x = np.asarray(instance, dtype=float).ravel()
    Z = background_rows(data, None)
    if Z.shape[1] != x.size:
        raise DataError(f"instance has {x.size} features, data has {Z.shape[1]}")
    M = config.samples
    if config.sweep:
        return _sweep_marginals(model, x, Z, M, config.seed, config.antithetic, n_jobs)
    cols = [_feature_marginals(model, x, Z, j, M, config.seed, config.antithetic, n_jobs) for j in range(x.size)]
    return np.stack(cols, axis=1)


def mc_shapley(
    model,
    instance,
    data: Dataset | np.ndarray,
    config: McConfig = McConfig(),
    output_index: int | None = None,
    feature_names=None,
    n_jobs: int | None = None,
) -> Explanation:
    model = as_predictor(model)
    x = np.asarray(instance, dtype=float).ravel()
    marg = mc_marginals(model, x, data, config, n_jobs)
    M = marg.shape[0]
    phi = marg.mean(axis=0)
    if M > 1:
        stderr = marg.std(axis=0, ddof=1) / np.sqrt(M)
    else:
        stderr = np.zeros_like(phi)
    Z = background_rows(data, None)
    base = evaluate(model, Z, n_jobs).mean(axis=0)
    pred = evaluate(model, x[None, :], n_jobs)[0]
    if output_index is not None:
        if not 0 <= output_index < model.n_outputs:
            raise ValueError(f"output_index {output_index} out of range")
        sl = slice(output_index, output_index + 1)
        phi, stderr, base, pred = phi[:, sl], stderr[:, sl], base[sl], pred[sl]
    names = tuple(feature_names) if feature_names is not None else (
        data.feature_names if isinstance(data, Dataset) else tuple(f"x{i}" for i in range(x.size))
    )
    diagnostics = {
        "samples_per_feature": int(M),
        "seed": int(config.seed),
        "antithetic": bool(config.antithetic),
        "sweep": bool(config.sweep),
        "stderr": stderr,
        "data_rows": int(Z.shape[0]),
    }
    return Explanation(base, phi, names, "mc", pred, diagnostics)


def mc_convergence_curve(
    model,
    instance,
    data: Dataset | np.ndarray,
    checkpoints,
    seed: int = 0,
    output_index: int = 0,
    antithetic: bool = False,
    exact_phi: np.ndarray | None = None,
    n_jobs: int | None = None,
) -> list[tuple[int, float]]:
    """Max-abs error against exact Shapley after each checkpoint sample count.

    One run of ``max(checkpoints)`` samples is drawn; each checkpoint uses its
    prefix, so the curve tracks a single estimator as it accumulates samples.
    """
    checkpoints = sorted(int(c) for c in checkpoints)
    if not checkpoints or checkpoints[0] < 1:
        raise ValueError("checkpoints must be positive sample counts")
    model = as_predictor(model)
    x = np.asarray(instance, dtype=float).ravel()
    if exact_phi is None:
        if x.size > SUBSET_CAP:
            raise ValueError("too many features for the exact oracle")
        exact_phi = exact_explain(model, x, data, background_cap=None, n_jobs=n_jobs).phi[:, output_index]
    marg = mc_marginals(model, x, data, McConfig(checkpoints[-1], seed, antithetic), n_jobs)[:, :, output_index]
    running = np.cumsum(marg, axis=0)
    return [(M, float(np.max(np.abs(running[M - 1] / M - exact_phi)))) for M in checkpoints]
