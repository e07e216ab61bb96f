"""Attention network over the feature axis.

Each scalar feature ``x_j`` is embedded to ``u_j = x_j * W_j`` (d dims, with an
optional per-position bias), so a zero input scores exactly 0.  A bidirectional
recurrent encoder runs over positions ``j = 1..N`` to give representations
``h_j`` (2h dims), and the attention layer scores every position with

    e_j = tanh(u_j . (w_j + B)),   alpha = softmax(e),   c = sum_j alpha_j h_j

before a dense decoder maps the context ``c`` to the outputs.  The scores and
weights are the model's intrinsic explanation.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .functional import activate, as_float, sigmoid
from .functional import softmax as _softmax
from .mlp import uniform_fan_in


@dataclass(frozen=True)
class AttentionNetSpec:
    n_features: int
    n_outputs: int = 1
    embed_dim: int = 4
    hidden: int = 8
    cell: str = "lstm"
    decoder_hidden: int | None = 16
    output_activation: str = "identity"
    zero_score_init: bool = False
    embed_bias: bool = False

    def __post_init__(self):
        if self.n_features < 1 or self.n_outputs < 1:
            raise ValueError("feature and output counts must be positive")
        if self.embed_dim < 1 or self.hidden < 1:
            raise ValueError("embed_dim and hidden must be >= 1")
        if self.cell not in ("lstm", "rnn"):
            raise ValueError(f"unknown recurrent cell {self.cell!r}")
        if self.decoder_hidden is not None and self.decoder_hidden < 1:
            raise ValueError("decoder_hidden must be positive or None")
        if self.output_activation not in ("identity", "relu", "sigmoid", "softmax"):
            raise ValueError(f"unsupported output activation {self.output_activation!r}")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "AttentionNetSpec":
        return cls(**d)


@dataclass(frozen=True, eq=False)
class AttentionTrace:
    """Attention read-out for one instance."""

    scores: np.ndarray
    weights: np.ndarray
    context: np.ndarray

    def to_dict(self) -> dict:
        return {"scores": self.scores.tolist(), "weights": self.weights.tolist(), "context": self.context.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "AttentionTrace":
        return cls(np.asarray(d["scores"]), np.asarray(d["weights"]), np.asarray(d["context"]))


def attention_scores(x, w, B) -> np.ndarray:
    """``tanh(x_j . (w_j + B))`` per position.

    ``w`` of shape ``(N,)`` treats positions as scalars (``x`` is ``(..., N)``);
    ``w`` of shape ``(N, d)`` takes ``x`` as ``(..., N, d)``.
    """
    x = as_float(x)
    w = as_float(w)
    v = w + as_float(B)
    if w.ndim == 1:
        if x.shape[-1] != w.shape[0]:
            raise ValueError("x and w differ in length")
        return np.tanh(x * v)
    if x.shape[-2:] != w.shape:
        raise ValueError("x and w differ in shape")
    return np.tanh(np.sum(x * v, axis=-1))


def attention_weights(scores) -> np.ndarray:
    return _softmax(as_float(scores), axis=-1)


def context_vector(weights, representations) -> np.ndarray:
    """``sum_j alpha_j h_j``; ``h`` is ``(..., N)`` (scalars) or ``(..., N, D)``."""
    a = as_float(weights)
    h = as_float(representations)
    if h.shape[: a.ndim] != a.shape:
        raise ValueError(f"{a.shape[-1]} weights for {h.shape[a.ndim - 1]} representations")
    if h.ndim == a.ndim:
        return np.sum(a * h, axis=-1)
    return np.einsum("...j,...jd->...d", a, h)


# ---------------------------------------------------------------------------
# recurrent cells
# ---------------------------------------------------------------------------


def _cell_forward(cell, U, Wx, Wh, b, reverse):
    Bn, N, _ = U.shape
    h = Wh.shape[0]
    H = np.empty((Bn, N, h), dtype=U.dtype)
    steps = []
    h_prev = np.zeros((Bn, h), dtype=U.dtype)
    c_prev = np.zeros((Bn, h), dtype=U.dtype)
    order = range(N - 1, -1, -1) if reverse else range(N)
    for j in order:
        z = U[:, j] @ Wx + h_prev @ Wh + b
        if cell == "lstm":
            i = sigmoid(z[:, :h])
            f = sigmoid(z[:, h : 2 * h])
            g = np.tanh(z[:, 2 * h : 3 * h])
            o = sigmoid(z[:, 3 * h :])
            c = f * c_prev + i * g
            tc = np.tanh(c)
            hc = o * tc
            steps.append((j, h_prev, c_prev, i, f, g, o, tc))
            c_prev = c
        else:
            hc = np.tanh(z)
            steps.append((j, h_prev, hc))
        H[:, j] = hc
        h_prev = hc
    return H, steps


def _cell_backward(cell, dH, U, Wx, Wh, steps):
    Bn, N, _ = U.shape
    h = Wh.shape[0]
    dWx = np.zeros_like(Wx)
    dWh = np.zeros_like(Wh)
    db = np.zeros(Wx.shape[1])
    dU = np.zeros_like(U)
    dh_next = np.zeros((Bn, h))
    dc_next = np.zeros((Bn, h))
    for step in reversed(steps):
        j = step[0]
        dh = dH[:, j] + dh_next
        if cell == "lstm":
            _, h_prev, c_prev, i, f, g, o, tc = step
            do = dh * tc
            dc = dc_next + dh * o * (1.0 - tc * tc)
            dz = np.concatenate(
                [dc * g * i * (1.0 - i), dc * c_prev * f * (1.0 - f), dc * i * (1.0 - g * g), do * o * (1.0 - o)],
                axis=1,
            )
            dc_next = dc * f
        else:
            _, h_prev, hc = step
            dz = dh * (1.0 - hc * hc)
        dWx += U[:, j].T @ dz
        dWh += h_prev.T @ dz
        db += dz.sum(axis=0)
        dU[:, j] += dz @ Wx.T
        dh_next = dz @ Wh.T
    return dWx, dWh, db, dU


class AttentionNet:
    kind = "attention"

    def __init__(self, spec: AttentionNetSpec, params: dict | None = None, seed: int = 0):
        self.spec = spec
        if params is None:
            params = self._init(np.random.default_rng(seed))
        self.params = {k: np.asarray(v, dtype=float) for k, v in params.items()}

    def _init(self, rng):
        s = self.spec
        N, d, h = s.n_features, s.embed_dim, s.hidden
        gates = 4 * h if s.cell == "lstm" else h
        p = {"emb_W": uniform_fan_in(rng, 1, (N, d))}
        if s.embed_bias:
            p["emb_b"] = uniform_fan_in(rng, 1, (N, d))
        for side in ("fwd", "bwd"):
            fan = d + h
            p[f"{side}_Wx"] = uniform_fan_in(rng, fan, (d, gates))
            p[f"{side}_Wh"] = uniform_fan_in(rng, fan, (h, gates))
            p[f"{side}_b"] = uniform_fan_in(rng, fan, (gates,))
        if s.zero_score_init:
            p["score_w"] = np.zeros((N, d))
            p["score_B"] = np.zeros(d)
        else:
            p["score_w"] = uniform_fan_in(rng, d, (N, d))
            p["score_B"] = uniform_fan_in(rng, d, (d,))
        width = 2 * h
        if s.decoder_hidden:
            p["dec_W0"] = uniform_fan_in(rng, width, (width, s.decoder_hidden))
            p["dec_b0"] = uniform_fan_in(rng, width, (s.decoder_hidden,))
            width = s.decoder_hidden
        p["dec_W"] = uniform_fan_in(rng, width, (width, s.n_outputs))
        p["dec_b"] = uniform_fan_in(rng, width, (s.n_outputs,))
        return p

    @property
    def n_inputs(self) -> int:
        return self.spec.n_features

    @property
    def n_outputs(self) -> int:
        return self.spec.n_outputs

    @property
    def output_activation(self) -> str:
        return self.spec.output_activation

    # -- forward pieces ---------------------------------------------------

    def embed(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(as_float(X))
        if X.shape[1] != self.spec.n_features:
            raise ValueError(f"expected {self.spec.n_features} features, got {X.shape[1]}")
        U = X[:, :, None] * self.params["emb_W"][None]
        if self.spec.embed_bias:
            U = U + self.params["emb_b"][None]
        return U

    def encode(self, X: np.ndarray):
        """Embeddings ``u`` and representations ``h``: ``(B, N, d)``, ``(B, N, 2h)``."""
        U = self.embed(X)
        p, cell = self.params, self.spec.cell
        Hf, _ = _cell_forward(cell, U, p["fwd_Wx"], p["fwd_Wh"], p["fwd_b"], reverse=False)
        Hb, _ = _cell_forward(cell, U, p["bwd_Wx"], p["bwd_Wh"], p["bwd_b"], reverse=True)
        return U, np.concatenate([Hf, Hb], axis=2)

    def decode(self, context: np.ndarray) -> np.ndarray:
        """Output-space prediction from context vectors."""
        return activate(self._decode_logits(context)[0], self.spec.output_activation)

    def _decode_logits(self, c):
        p = self.params
        if self.spec.decoder_hidden:
            z0 = c @ p["dec_W0"] + p["dec_b0"]
            a0 = np.maximum(z0, 0.0)
            return a0 @ p["dec_W"] + p["dec_b"], (z0, a0)
        return c @ p["dec_W"] + p["dec_b"], None

    def forward(self, X: np.ndarray):
        p, cell = self.params, self.spec.cell
        U = self.embed(X)
        Hf, steps_f = _cell_forward(cell, U, p["fwd_Wx"], p["fwd_Wh"], p["fwd_b"], reverse=False)
        Hb, steps_b = _cell_forward(cell, U, p["bwd_Wx"], p["bwd_Wh"], p["bwd_b"], reverse=True)
        H = np.concatenate([Hf, Hb], axis=2)
        e = attention_scores(U, p["score_w"], p["score_B"])
        alpha = attention_weights(e)
        c = context_vector(alpha, H)
        logits, dec = self._decode_logits(c)
        cache = dict(X=np.atleast_2d(as_float(X)), U=U, H=H, e=e, alpha=alpha, c=c, dec=dec,
                     steps_f=steps_f, steps_b=steps_b)
        return logits, cache

    def backward(self, dlogits: np.ndarray, cache) -> dict:
        p, s = self.params, self.spec
        h = s.hidden
        g = {}
        c, U, H, e, alpha = cache["c"], cache["U"], cache["H"], cache["e"], cache["alpha"]
        if s.decoder_hidden:
            z0, a0 = cache["dec"]
            g["dec_W"] = a0.T @ dlogits
            g["dec_b"] = dlogits.sum(axis=0)
            dz0 = (dlogits @ p["dec_W"].T) * (z0 > 0)
            g["dec_W0"] = c.T @ dz0
            g["dec_b0"] = dz0.sum(axis=0)
            dc = dz0 @ p["dec_W0"].T
        else:
            g["dec_W"] = c.T @ dlogits
            g["dec_b"] = dlogits.sum(axis=0)
            dc = dlogits @ p["dec_W"].T
        # context = sum_j alpha_j h_j
        dalpha = np.einsum("bd,bjd->bj", dc, H)
        dH = alpha[:, :, None] * dc[:, None, :]
        de = alpha * (dalpha - np.sum(alpha * dalpha, axis=1, keepdims=True))
        ds = de * (1.0 - e * e)
        v = p["score_w"] + p["score_B"]
        dv = np.einsum("bj,bjd->jd", ds, U)
        g["score_w"] = dv
        g["score_B"] = dv.sum(axis=0)
        dU = ds[:, :, None] * v[None]
        for side, sl, steps in (("fwd", slice(0, h), cache["steps_f"]), ("bwd", slice(h, 2 * h), cache["steps_b"])):
            dWx, dWh, db, dUs = _cell_backward(s.cell, dH[:, :, sl], U, p[f"{side}_Wx"], p[f"{side}_Wh"], steps)
            g[f"{side}_Wx"], g[f"{side}_Wh"], g[f"{side}_b"] = dWx, dWh, db
            dU += dUs
        X = cache["X"]
        g["emb_W"] = np.einsum("bjd,bj->jd", dU, X)
        if s.embed_bias:
            g["emb_b"] = dU.sum(axis=0)
        return {k: g[k] for k in p}

    def predict(self, X: np.ndarray) -> np.ndarray:
        logits, _ = self.forward(X)
        return activate(logits, self.spec.output_activation)

    def attention(self, X: np.ndarray):
        """Scores, weights and context for each row: ``(B, N)``, ``(B, N)``, ``(B, 2h)``."""
        _, cache = self.forward(X)
        return cache["e"], cache["alpha"], cache["c"]


@dataclass(frozen=True, eq=False)
class AttentionSummary:
    feature_names: tuple[str, ...]
    mean_scores: np.ndarray
    mean_weights: np.ndarray
    n_instances: int

    def to_dict(self) -> dict:
        return {
            "feature_names": list(self.feature_names),
            "mean_scores": self.mean_scores.tolist(),
            "mean_weights": self.mean_weights.tolist(),
            "n_instances": int(self.n_instances),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "AttentionSummary":
        return cls(tuple(d["feature_names"]), np.asarray(d["mean_scores"], dtype=float),
                   np.asarray(d["mean_weights"], dtype=float), int(d["n_instances"]))


def extract_attention(model, instances, feature_names=None) -> tuple[list[AttentionTrace], AttentionSummary]:
    """Per-instance attention traces plus feature-wise means of scores and weights.

    ``model`` may be wrapped (e.g. by a scaler); the attention network is
    located through ``.inner`` and inputs are transformed the same way as
    for prediction.
    """
    net, transform = _unwrap(model)
    rows = getattr(instances, "rows", instances)
    X = transform(np.atleast_2d(np.asarray(rows, dtype=float)))
    e, alpha, c = net.attention(X)
    traces = [AttentionTrace(e[i], alpha[i], c[i]) for i in range(X.shape[0])]
    if feature_names is None:
        feature_names = getattr(instances, "feature_names", None) or tuple(f"x{i}" for i in range(X.shape[1]))
    summary = AttentionSummary(tuple(feature_names), e.mean(axis=0), alpha.mean(axis=0), X.shape[0])
    return traces, summary


def _unwrap(model):
    transform = lambda X: X  # noqa: E731
    while not isinstance(model, AttentionNet):
        inner = getattr(model, "inner", None)
        if inner is None:
            raise TypeError(f"{type(model).__name__} has no attention channel")
        scaler = getattr(model, "x_scaler", None)
        if scaler is not None:
            prev = transform
            transform = lambda X, prev=prev, scaler=scaler: scaler.transform(prev(X))  # noqa: E731
        model = inner
    return model, transform
