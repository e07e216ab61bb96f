"""Aggregation and reporting of attributions.

Global importance is the mean absolute attribution per feature.  A force
decomposition splits one prediction into the base value plus signed
per-feature pushes.  Group explanations collect force decompositions for a
subject/activity slice, and sensor groups are merged by summing signed
attributions (additivity makes the sum the Shapley value of the merged
player).
"""

from __future__ import annotations

import html
import json
import math
import os
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from .core import DataError, Dataset, Explanation, _jsonable
from .nnet.attention import AttentionSummary

REPORT_SCHEMA = "attribkit-report"
REPORT_VERSION = 1
FORMATS = ("json", "svg", "html")

NEGATIVE_COLOR = "#d62728"
POSITIVE_COLOR = "#1f77b4"


class ReportFormatError(ValueError):
    """Unknown or unsupported report format."""


def _rank(values: np.ndarray) -> tuple[int, ...]:
    # descending by value, ties by ascending feature index
    idx = np.arange(values.size)
    return tuple(int(i) for i in np.lexsort((idx, -values)))


@dataclass(frozen=True, eq=False)
class GlobalImportance:
    feature_names: tuple[str, ...]
    importance: np.ndarray
    order: tuple[int, ...]
    method: str
    n_instances: int
    output_index: int = 0

    def ranked(self) -> list[tuple[str, float]]:
        return [(self.feature_names[i], float(self.importance[i])) for i in self.order]

    def top(self, k: int) -> tuple[int, ...]:
        return self.order[:k]

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "output_index": int(self.output_index),
            "n_instances": int(self.n_instances),
            "features": [
                {"rank": r + 1, "index": int(i), "name": self.feature_names[i], "importance": float(self.importance[i])}
                for r, i in enumerate(self.order)
            ],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GlobalImportance":
        entries = sorted(d["features"], key=lambda e: e["index"])
        return cls(
            tuple(e["name"] for e in entries),
            np.array([e["importance"] for e in entries], dtype=float),
            tuple(e["index"] for e in sorted(d["features"], key=lambda e: e["rank"])),
            d["method"],
            int(d["n_instances"]),
            int(d.get("output_index", 0)),
        )


def importance_from_matrix(phi: np.ndarray, feature_names, method: str, output_index: int = 0) -> GlobalImportance:
    """``phi`` is ``(n_instances, N)`` for one output."""
    phi = np.atleast_2d(np.asarray(phi, dtype=float))
    values = np.mean(np.abs(phi), axis=0)
    return GlobalImportance(tuple(feature_names), values, _rank(values), method, phi.shape[0], output_index)


def global_importance(explanations: Sequence[Explanation], output_index: int = 0) -> GlobalImportance:
    """Mean absolute attribution per feature over a set of explanations."""
    explanations = list(explanations)
    if not explanations:
        raise ValueError("need at least one explanation")
    first = explanations[0]
    for e in explanations[1:]:
        if e.feature_names != first.feature_names:
            raise ValueError("explanations have different feature sets")
        if e.method != first.method:
            raise ValueError(f"mixed methods: {first.method!r} and {e.method!r}")
        if e.n_outputs != first.n_outputs:
            raise ValueError("explanations have different output counts")
    if not 0 <= output_index < first.n_outputs:
        raise ValueError(f"output_index {output_index} out of range")
    phi = np.stack([e.phi[:, output_index] for e in explanations])
    return importance_from_matrix(phi, first.feature_names, first.method, output_index)


@dataclass(frozen=True, eq=False)
class ForceDecomposition:
    feature_names: tuple[str, ...]
    forces: np.ndarray
    base_value: float
    prediction: float
    method: str
    tolerance: float | None = None
    instance: int | None = None
    feature_values: np.ndarray | None = None
    diagnostics: dict = field(default_factory=dict)

    @property
    def positive(self) -> tuple[int, ...]:
        return self._side(self.forces > 0)

    @property
    def negative(self) -> tuple[int, ...]:
        return self._side(self.forces < 0)

    def _side(self, sel: np.ndarray) -> tuple[int, ...]:
        idx = np.flatnonzero(sel)
        return tuple(int(i) for i in idx[np.argsort(-np.abs(self.forces[idx]), kind="stable")])

    @property
    def residual(self) -> float:
        return self.base_value + math.fsum(self.forces) - self.prediction

    def reconstructs(self) -> bool:
        if self.tolerance is None:
            return True
        return abs(self.residual) <= self.tolerance

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "instance": self.instance,
            "base_value": float(self.base_value),
            "prediction": float(self.prediction),
            "tolerance": self.tolerance,
            "feature_names": list(self.feature_names),
            "forces": self.forces.tolist(),
            "feature_values": None if self.feature_values is None else self.feature_values.tolist(),
            "positive": list(self.positive),
            "negative": list(self.negative),
            "diagnostics": _jsonable(self.diagnostics),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ForceDecomposition":
        fv = d.get("feature_values")
        return cls(
            tuple(d["feature_names"]),
            np.asarray(d["forces"], dtype=float),
            float(d["base_value"]),
            float(d["prediction"]),
            d["method"],
            d.get("tolerance"),
            d.get("instance"),
            None if fv is None else np.asarray(fv, dtype=float),
            d.get("diagnostics", {}),
        )


def local_force(
    explanation: Explanation,
    output_index: int = 0,
    instance: int | None = None,
    feature_values=None,
) -> ForceDecomposition:
    """Split one output of an explanation into positive and negative forces."""
    if explanation.method == "attention":
        raise ValueError("attention weights are not additive forces")
    if not 0 <= output_index < explanation.n_outputs:
        raise ValueError(f"output_index {output_index} out of range")
    forces = explanation.phi[:, output_index].copy()
    base = float(explanation.base_value[output_index])
    if explanation.prediction is None:
        pred = base + math.fsum(forces)
    else:
        pred = float(explanation.prediction[output_index])
    diagnostics = dict(explanation.diagnostics)
    if "stderr" in diagnostics:
        diagnostics["stderr"] = np.asarray(diagnostics["stderr"]).reshape(explanation.phi.shape)[:, output_index]
    fd = ForceDecomposition(
        explanation.feature_names,
        forces,
        base,
        pred,
        explanation.method,
        explanation.tolerance(),
        instance,
        None if feature_values is None else np.asarray(feature_values, dtype=float).ravel(),
        diagnostics,
    )
    if not fd.reconstructs():
        raise ValueError(f"base + sum(forces) misses the prediction by {fd.residual:.3g} (tolerance {fd.tolerance:.3g})")
    return fd


@dataclass(frozen=True, eq=False)
class GroupExplanation:
    key: dict[str, str]
    members: tuple[ForceDecomposition, ...]
    feature_names: tuple[str, ...]
    method: str

    @property
    def forces(self) -> np.ndarray:
        return np.stack([m.forces for m in self.members])

    @property
    def instances(self) -> tuple[int | None, ...]:
        return tuple(m.instance for m in self.members)

    def summary(self) -> dict[str, np.ndarray]:
        F = self.forces
        return {"mean": F.mean(axis=0), "min": F.min(axis=0), "max": F.max(axis=0)}

    def importance(self) -> GlobalImportance:
        return importance_from_matrix(self.forces, self.feature_names, self.method)

    def to_dict(self) -> dict:
        return {
            "key": dict(self.key),
            "method": self.method,
            "feature_names": list(self.feature_names),
            "summary": {k: v.tolist() for k, v in self.summary().items()},
            "members": [m.to_dict() for m in self.members],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GroupExplanation":
        members = tuple(ForceDecomposition.from_dict(m) for m in d["members"])
        return cls(dict(d["key"]), members, tuple(d["feature_names"]), d["method"])


Estimator = Callable[[np.ndarray], Explanation]


def group_explanations(
    dataset: Dataset,
    key: Mapping[str, str],
    estimator: Estimator,
    limit: int = 200,
    output_index: int = 0,
) -> GroupExplanation:
    """Explain the first ``limit`` rows (by original index) of one group.

    ``estimator`` maps an instance vector to an Explanation; build one with
    :func:`make_estimator`.
    """
    if limit < 1:
        raise ValueError("limit must be >= 1")
    subset = dataset.select_group(dict(key))
    if len(subset) == 0:
        raise DataError(f"no rows in group {dict(key)}")
    pos = np.argsort(subset.index, kind="stable")[:limit]
    members = []
    for p in pos:
        x = subset.rows[p]
        members.append(local_force(estimator(x), output_index, int(subset.index[p]), x))
    return GroupExplanation(dict(key), tuple(members), dataset.feature_names, members[0].method)


def make_estimator(
    method: str,
    model,
    background,
    *,
    budget: int | None = None,
    samples: int = 2000,
    seed: int = 0,
    background_cap: int | None = 128,
    feature_names=None,
    n_jobs: int | None = None,
) -> Estimator:
    """Close over model, background and settings of one Shapley estimator."""
    from .exact import exact_explain
    from .kernel import KernelConfig, kernel_shap_explain
    from .montecarlo import McConfig, mc_shapley

    if method == "exact":
        return lambda x: exact_explain(model, x, background, feature_names, background_cap, seed, n_jobs=n_jobs)
    if method == "kernel":
        cfg = KernelConfig(budget=budget, seed=seed, background_cap=background_cap)
        return lambda x: kernel_shap_explain(model, x, background, cfg, feature_names, n_jobs)
    if method == "mc":
        cfg = McConfig(samples=samples, seed=seed)
        return lambda x: mc_shapley(model, x, background, cfg, feature_names=feature_names, n_jobs=n_jobs)
    raise ValueError(f"unknown Shapley method {method!r}")


def merge_feature_groups(explanation: Explanation, grouping: Mapping[str, str]) -> Explanation:
    """Sum signed attributions within feature groups.

    Groups appear in order of their first member.  The grouped explanation
    keeps base value and prediction, and the grouped attributions have the
    same correctly rounded total as the originals: one group absorbs the
    rounding residual of the per-group sums.  ``diagnostics["magnitude"]`` holds the
    per-group sum of absolute attributions and ``diagnostics["members"]`` the
    member features.
    """
    missing = [n for n in explanation.feature_names if n not in grouping]
    if missing:
        raise ValueError(f"features missing from grouping: {missing}")
    labels: list[str] = []
    members: dict[str, list[int]] = {}
    for j, name in enumerate(explanation.feature_names):
        g = grouping[name]
        if g not in members:
            labels.append(g)
            members[g] = []
        members[g].append(j)
    K = explanation.n_outputs
    phi = np.empty((len(labels), K))
    mag = np.empty((len(labels), K))
    for r, g in enumerate(labels):
        block = explanation.phi[members[g]]
        for k in range(K):
            phi[r, k] = math.fsum(block[:, k])
            mag[r, k] = math.fsum(np.abs(block[:, k]))
    residual = [_conserve(phi[:, k], explanation.phi[:, k]) for k in range(K)]
    diagnostics = dict(explanation.diagnostics)
    if "stderr" in diagnostics:
        # independent per-feature estimates: variances add
        se = np.asarray(diagnostics["stderr"]).reshape(explanation.phi.shape)
        diagnostics["stderr"] = np.array([np.sqrt(np.sum(se[members[g]] ** 2, axis=0)) for g in labels])
    diagnostics["magnitude"] = mag
    if any(residual):
        diagnostics["conservation_residual"] = residual
    diagnostics["members"] = {g: [explanation.feature_names[j] for j in members[g]] for g in labels}
    return Explanation(explanation.base_value, phi, tuple(labels), explanation.method, explanation.prediction, diagnostics)


def _conserve(merged: np.ndarray, original: np.ndarray) -> float:
    """Adjust one entry of ``merged`` in place so both totals round alike.

    Each group sum is correctly rounded on its own, which can leave the
    correctly rounded total an ulp off.  The largest group that can absorb
    the residual takes it, moving by no more than the combined rounding
    error of all group sums.  Under heavy cancellation no float assignment
    may exist; the returned residual is then nonzero and the sums are kept.
    """
    target = math.fsum(original)
    if math.fsum(merged) == target:
        return 0.0
    budget = float(np.sum(np.spacing(np.abs(merged))))
    for k in np.argsort(-np.abs(merged), kind="stable"):
        keep = merged[k]
        value = math.fsum([*original.tolist(), *(-np.delete(merged, k)).tolist()])
        for _ in range(4):
            if abs(value - keep) > budget:
                break
            merged[k] = value
            total = math.fsum(merged)
            if total == target:
                return 0.0
            value = float(np.nextafter(value, np.inf if target > total else -np.inf))
        merged[k] = keep
    return math.fsum(merged) - target


# ---------------------------------------------------------------- reports

_KINDS = {
    GlobalImportance: "global_importance",
    ForceDecomposition: "force",
    GroupExplanation: "group",
    AttentionSummary: "attention_summary",
}
_FROM_KIND = {v: k for k, v in _KINDS.items()}


def _kind(artifact) -> str:
    for cls, kind in _KINDS.items():
        if isinstance(artifact, cls):
            return kind
    raise TypeError(f"cannot report a {type(artifact).__name__}")


def report_document(artifact, meta: Mapping | None = None) -> dict:
    return {
        "schema": REPORT_SCHEMA,
        "version": REPORT_VERSION,
        "kind": _kind(artifact),
        "meta": _jsonable(dict(meta or {})),
        "data": artifact.to_dict(),
    }


def report_json(artifact, meta: Mapping | None = None) -> str:
    return json.dumps(report_document(artifact, meta), indent=2, allow_nan=False) + "\n"


def write_report(artifact, fmt: str, path: str | os.PathLike, meta: Mapping | None = None) -> None:
    """Write ``artifact`` as json, svg or html.

    ``meta`` (seeds, budgets, file names) is stored in the JSON envelope and
    shown as a caption in html.
    """
    if fmt not in FORMATS:
        raise ReportFormatError(f"unknown report format {fmt!r}; choose from {', '.join(FORMATS)}")
    if fmt == "json":
        text = report_json(artifact, meta)
    elif fmt == "svg":
        text = render_svg(artifact)
    else:
        text = render_html(artifact, meta)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def read_report(path: str | os.PathLike, with_meta: bool = False):
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    if doc.get("schema") != REPORT_SCHEMA:
        raise ValueError(f"{path} is not an {REPORT_SCHEMA} document")
    if doc.get("version") != REPORT_VERSION:
        raise ValueError(f"unsupported report version {doc.get('version')!r}")
    cls = _FROM_KIND.get(doc.get("kind"))
    if cls is None:
        raise ValueError(f"unknown report kind {doc.get('kind')!r}")
    artifact = cls.from_dict(doc["data"])
    return (artifact, doc.get("meta", {})) if with_meta else artifact


# ---------------------------------------------------------------- svg

_ROW = 22
_LABEL_W = 150
_PLOT_W = 360
_PAD = 10


def _bars_svg(title: str, labels: Sequence[str], values: Sequence[float], signed: bool) -> str:
    """Horizontal bar chart; zero-valued rows are listed but get no bar."""
    values = [float(v) for v in values]
    span = max((abs(v) for v in values), default=0.0) or 1.0
    if signed:
        zero = _LABEL_W + _PLOT_W / 2
        scale = (_PLOT_W / 2 - _PAD) / span
    else:
        zero = _LABEL_W
        scale = (_PLOT_W - _PAD) / span
    height = 30 + _ROW * len(values) + _PAD
    width = _LABEL_W + _PLOT_W + 70
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{width}" height="{height}" '
        f'font-family="sans-serif" font-size="12">',
        f'<text x="{_PAD}" y="18" font-weight="bold">{html.escape(title)}</text>',
    ]
    for r, (label, v) in enumerate(zip(labels, values)):
        y = 30 + r * _ROW
        out.append(f'<text x="{_LABEL_W - 6}" y="{y + 14}" text-anchor="end">{html.escape(label)}</text>')
        if v == 0.0:
            continue
        w = abs(v) * scale
        x = zero - w if v < 0 else zero
        color = NEGATIVE_COLOR if v < 0 else POSITIVE_COLOR
        sign = "negative" if v < 0 else "positive"
        out.append(
            f'<rect class="bar {sign}" x="{x:.2f}" y="{y + 3}" width="{w:.2f}" height="{_ROW - 6}" fill="{color}">'
            f"<title>{html.escape(label)}: {v:.6g}</title></rect>"
        )
        tx = x - 4 if v < 0 else x + w + 4
        anchor = "end" if v < 0 else "start"
        out.append(f'<text x="{tx:.2f}" y="{y + 14}" text-anchor="{anchor}">{v:.4g}</text>')
    out.append(f'<line x1="{zero}" y1="26" x2="{zero}" y2="{height - _PAD}" stroke="#444" stroke-width="1"/>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def _force_order(fd: ForceDecomposition) -> list[int]:
    return list(fd.negative) + list(fd.positive)


def render_svg(artifact) -> str:
    kind = _kind(artifact)
    if kind == "global_importance":
        names = [artifact.feature_names[i] for i in artifact.order]
        vals = [artifact.importance[i] for i in artifact.order]
        return _bars_svg(f"Global importance ({artifact.method}, n={artifact.n_instances})", names, vals, False)
    if kind == "force":
        idx = _force_order(artifact)
        title = f"Forces: base {artifact.base_value:.4g} -> prediction {artifact.prediction:.4g}"
        return _bars_svg(title, [artifact.feature_names[i] for i in idx], [artifact.forces[i] for i in idx], True)
    if kind == "group":
        mean = artifact.summary()["mean"]
        label = ", ".join(f"{k}={v}" for k, v in artifact.key.items())
        return _bars_svg(f"Mean forces for {label} (n={len(artifact.members)})", artifact.feature_names, mean, True)
    order = _rank(artifact.mean_weights)
    return _bars_svg(
        f"Mean attention weight (n={artifact.n_instances})",
        [artifact.feature_names[i] for i in order],
        [artifact.mean_weights[i] for i in order],
        False,
    )


# ---------------------------------------------------------------- html

def _table(header: Sequence[str], rows: Sequence[Sequence]) -> str:
    def cell(v):
        return f"{v:.6g}" if isinstance(v, (float, np.floating)) else html.escape(str(v))

    head = "".join(f"<th>{html.escape(h)}</th>" for h in header)
    body = "\n".join("<tr>" + "".join(f"<td>{cell(v)}</td>" for v in r) + "</tr>" for r in rows)
    return f"<table>\n<tr>{head}</tr>\n{body}\n</table>"


def _html_sections(artifact) -> list[str]:
    kind = _kind(artifact)
    svg = render_svg(artifact)
    if kind == "global_importance":
        rows = [(r + 1, artifact.feature_names[i], artifact.importance[i]) for r, i in enumerate(artifact.order)]
        return [svg, _table(("rank", "feature", "mean |phi|"), rows)]
    if kind == "force":
        rows = [(artifact.feature_names[i], artifact.forces[i]) for i in range(len(artifact.forces))]
        rows += [("base value", artifact.base_value), ("prediction", artifact.prediction)]
        return [svg, _table(("feature", "force"), rows)]
    if kind == "group":
        s = artifact.summary()
        rows = [(n, s["mean"][j], s["min"][j], s["max"][j]) for j, n in enumerate(artifact.feature_names)]
        parts = [svg, _table(("feature", "mean", "min", "max"), rows)]
        # one row per member, sorted by prediction: forces spread across features
        parts.append("<h2>Members by prediction</h2>")
        ordered = sorted(artifact.members, key=lambda m: (m.prediction, m.instance if m.instance is not None else -1))
        header = ("instance", "prediction", *artifact.feature_names)
        parts.append(_table(header, [(m.instance, m.prediction, *m.forces) for m in ordered]))
        return parts
    rows = [
        (n, artifact.mean_scores[j], artifact.mean_weights[j]) for j, n in enumerate(artifact.feature_names)
    ]
    note = (
        "<p>Scores e are signed (tanh); weights alpha are their softmax and are nonnegative. "
        "Both are reported because plots of attention often show the signed scores.</p>"
    )
    return [svg, note, _table(("feature", "mean score e", "mean weight alpha"), rows)]


def render_html(artifact, meta: Mapping | None = None) -> str:
    title = {
        "global_importance": "Global feature importance",
        "force": "Local force decomposition",
        "group": "Group explanation",
        "attention_summary": "Attention summary",
    }[_kind(artifact)]
    caption = ""
    if meta:
        caption = "<p class=\"meta\">" + html.escape(json.dumps(_jsonable(dict(meta)), sort_keys=True)) + "</p>"
    style = "body{font-family:sans-serif;margin:2em}table{border-collapse:collapse}td,th{border:1px solid #ccc;padding:2px 6px}"
    body = "\n".join(_html_sections(artifact))
    return (
        "<!DOCTYPE html>\n<html>\n<head>\n<meta charset=\"utf-8\">\n"
        f"<title>{title}</title>\n<style>{style}</style>\n</head>\n<body>\n"
        f"<h1>{title}</h1>\n{caption}\n{body}\n</body>\n</html>\n"
    )
