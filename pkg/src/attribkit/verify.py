"""Self-check batteries run by ``attribkit verify``.

Each suite returns a list of :class:`Check` records holding the observed
value next to its tolerance, so failures are reported with numbers.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import FunctionPredictor, LinearPredictor
from .exact import exact_explain, exact_shapley, exact_shapley_permutation
from .game import CoalitionGame, TabularGame, make_masking_game, random_game
from .kernel import KernelConfig, kernel_shap_explain
from .montecarlo import McConfig, mc_convergence_curve, mc_shapley
from .nnet.attention import AttentionNet, AttentionNetSpec
from .nnet.gradcheck import grad_check
from .nnet.mlp import MLP, MlpSpec


@dataclass(frozen=True)
class Check:
    name: str
    observed: float
    tolerance: float
    passed: bool
    relation: str = "<="

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"{status}  {self.name}: observed {self.observed:.3e} (need {self.relation} {self.tolerance:g})"


def _le(name: str, observed: float, tol: float) -> Check:
    return Check(name, float(observed), tol, bool(observed <= tol))


# ---------------------------------------------------------------- games

def plant_dummy(table: np.ndarray, d: int) -> np.ndarray:
    """Copy of ``table`` in which player ``d`` never changes the value."""
    t = table.copy()
    ints = np.arange(t.size)
    has = (ints >> d) & 1 == 1
    t[ints[has]] = t[ints[has] ^ (1 << d)]
    return t


def plant_twins(table: np.ndarray, i: int, k: int) -> np.ndarray:
    """Copy of ``table`` in which players ``i`` and ``k`` are interchangeable."""
    t = table.copy()
    ints = np.arange(t.size)
    only_i = ((ints >> i) & 1 == 1) & ((ints >> k) & 1 == 0)
    src = ints[only_i]
    t[src ^ (1 << i) ^ (1 << k)] = t[src]
    return t


def axiom_checks(n_games: int = 200, seed: int = 0) -> list[Check]:
    """Efficiency, null player, symmetry and additivity on seeded random games."""
    rng = np.random.default_rng(seed)
    eff = null = sym = add = 0.0
    for _ in range(n_games):
        n = int(rng.integers(3, 8))
        g = random_game(n, rng)
        h = random_game(n, rng)
        phi = exact_shapley(g)
        eff = max(eff, abs(phi.sum() - g.table[-1]))
        d = int(rng.integers(n))
        null = max(null, abs(exact_shapley(TabularGame(plant_dummy(g.table, d)))[d]))
        i, k = rng.choice(n, size=2, replace=False)
        tw = exact_shapley(TabularGame(plant_twins(g.table, int(i), int(k))))
        sym = max(sym, abs(tw[i] - tw[k]))
        add = max(add, float(np.max(np.abs(exact_shapley(g + h) - (phi + exact_shapley(h))))))
    return [
        _le(f"efficiency over {n_games} games", eff, 1e-9),
        _le(f"null player over {n_games} games", null, 1e-12),
        _le(f"symmetry over {n_games} games", sym, 1e-9),
        _le(f"additivity over {n_games} games", add, 1e-9),
    ]


def formula_checks(n_games: int = 100, seed: int = 1) -> list[Check]:
    """Subset-weight and permutation enumerations agree for n <= 6."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_games):
        g = random_game(int(rng.integers(1, 7)), rng)
        worst = max(worst, float(np.max(np.abs(exact_shapley(g) - exact_shapley_permutation(g)))))
    return [_le(f"subset vs permutation formula over {n_games} games", worst, 1e-9)]


# ---------------------------------------------------------------- oracle

def oracle_checks(seed: int = 0) -> list[Check]:
    rng = np.random.default_rng(seed)
    Z = rng.normal(size=(64, 5))
    X = rng.normal(size=(5, 5))
    mlp = MLP(MlpSpec((5, 16, 8, 1), "relu", "identity"), seed=seed)
    full = 0.0
    for x in X:
        ex = exact_explain(mlp, x, Z, background_cap=None)
        ke = kernel_shap_explain(mlp, x, Z, KernelConfig(budget=30, seed=seed, background_cap=None))
        full = max(full, float(np.max(np.abs(ex.phi - ke.phi))))

    w = rng.normal(size=5)
    lin = LinearPredictor(w, 0.3)
    x = X[0]
    truth = w * (x - Z.mean(axis=0))
    ex = exact_explain(lin, x, Z, background_cap=None).phi[:, 0]
    ke = kernel_shap_explain(lin, x, Z, KernelConfig(seed=seed, background_cap=None)).phi[:, 0]
    mc = mc_shapley(lin, x, Z, McConfig(2000, seed))
    z_lin = np.abs(mc.phi[:, 0] - truth) / np.maximum(mc.diagnostics["stderr"][:, 0], 1e-12)

    exact_mlp = exact_explain(mlp, x, Z, background_cap=None).phi[:, 0]
    mc_mlp = mc_shapley(mlp, x, Z, McConfig(2000, seed))
    z_mlp = np.abs(mc_mlp.phi[:, 0] - exact_mlp) / np.maximum(mc_mlp.diagnostics["stderr"][:, 0], 1e-12)
    return [
        _le("kernel at full budget vs exact (MLP, 5 instances)", full, 1e-6),
        _le("exact vs linear closed form", np.max(np.abs(ex - truth)), 1e-6),
        _le("kernel vs linear closed form", np.max(np.abs(ke - truth)), 1e-6),
        _le("mc vs linear closed form, in standard errors", np.max(z_lin), 3.0),
        _le("mc vs exact (MLP), in standard errors", np.max(z_mlp), 4.0),
    ]


# ---------------------------------------------------------------- gradients

def _targets_off_kink(model, X, rng) -> np.ndarray:
    # MAE has a kink at zero residual: keep every residual at least 0.1 away
    pred = model.predict(X)
    return pred + rng.choice([-1.0, 1.0], size=pred.shape) * rng.uniform(0.1, 1.0, size=pred.shape)


def gradcheck_checks(seed: int = 0) -> list[Check]:
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(8, 5))
    out = []
    mlp = MLP(MlpSpec((5, 7, 6, 2), "leaky_relu", "identity"), seed=seed)
    out.append(_le("MLP, mean absolute error", grad_check(mlp, X, _targets_off_kink(mlp, X, rng), "mean_absolute_error"), 1e-4))
    clf = MLP(MlpSpec((5, 7, 6, 3), "leaky_relu", "sigmoid"), seed=seed)
    Y = (rng.random((8, 3)) < 0.5).astype(float)
    out.append(_le("MLP, sigmoid + binary cross-entropy", grad_check(clf, X, Y, "binary_crossentropy"), 1e-4))
    for cell in ("lstm", "rnn"):
        net = AttentionNet(AttentionNetSpec(5, 2, embed_dim=3, hidden=4, cell=cell), seed=seed)
        err = grad_check(net, X, _targets_off_kink(net, X, rng), "mean_absolute_error")
        out.append(_le(f"attention net ({cell}), mean absolute error", err, 1e-4))
    net = AttentionNet(AttentionNetSpec(5, 3, embed_dim=3, hidden=4, output_activation="sigmoid"), seed=seed)
    out.append(_le("attention net, sigmoid + binary cross-entropy", grad_check(net, X, Y, "binary_crossentropy"), 1e-4))
    return out


# ---------------------------------------------------------------- convergence

def toy_nonlinear(X: np.ndarray) -> np.ndarray:
    """Six-feature nonlinear test function with interactions."""
    X = np.atleast_2d(X)
    return (
        np.sin(2.0 * X[:, 0]) + X[:, 1] * X[:, 2] + 0.5 * X[:, 3] ** 2 - np.tanh(X[:, 4]) + 0.3 * X[:, 5]
    )[:, None]


CONVERGENCE_CHECKPOINTS = (250, 1000, 4000)


def convergence_study(seeds=range(10), checkpoints=CONVERGENCE_CHECKPOINTS, n_background: int = 200):
    """Per-seed MC errors against exact Shapley, the output range, and the log-log slope.

    The slope is the least-squares fit of mean log error against log M, which
    equals the mean of the per-seed slopes.
    """
    rng = np.random.default_rng(2024)
    Z = rng.normal(size=(n_background, 6))
    x = rng.normal(size=6)
    model = FunctionPredictor(toy_nonlinear, 1)
    exact_phi = exact_explain(model, x, Z, background_cap=None).phi[:, 0]
    out_range = float(np.ptp(toy_nonlinear(Z)))
    errors = np.array([[e for _, e in mc_convergence_curve(model, x, Z, checkpoints, seed=s, exact_phi=exact_phi)] for s in seeds])
    slope = float(np.polyfit(np.log(checkpoints), np.log(errors).mean(axis=0), 1)[0])
    return errors, out_range, slope


def convergence_checks(seeds=range(10)) -> list[Check]:
    errors, out_range, slope = convergence_study(seeds)
    worst = float(errors[:, -1].max())
    return [
        _le(f"mc max-abs error at M={CONVERGENCE_CHECKPOINTS[-1]}, worst seed / output range", worst / out_range, 0.05),
        Check("log-error vs log-M slope", slope, -0.25, bool(-0.75 <= slope <= -0.25), "in [-0.75, -0.25], <="),
    ]


SUITES = {
    "axioms": lambda: axiom_checks() + formula_checks(),
    "oracle": oracle_checks,
    "gradcheck": gradcheck_checks,
    "convergence": convergence_checks,
}


def run_suite(name: str) -> list[Check]:
    if name not in SUITES:
        raise ValueError(f"unknown suite {name!r}; choose from {', '.join(SUITES)}")
    return SUITES[name]()
