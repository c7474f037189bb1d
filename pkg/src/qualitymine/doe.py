"""Blocked face-centered central composite designs and quadratic surfaces.

Model conventions
-----------------
Factors are coded to [-1, 1]. The fitted model contains an intercept,
sum-to-zero block contrasts, one linear and one squared term per factor and
every pairwise interaction. Squared columns are the raw coded squares.

Block contrasts use the first block label as the reference level: column
``j`` is +1 for runs in block ``j + 1``, -1 for runs in the first block and 0
elsewhere. Effects are twice the coded coefficients for every term except
the intercept, which is reported as the coefficient itself. ANOVA sums of
squares are partial (each term adjusted for all others).
"""

from __future__ import annotations

import math

import csv
import io
import itertools
import warnings
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .errors import DesignError, ExtrapolationWarning, SpecError
from .numerics import DesignMatrix, LeastSquaresSolution, f_p_upper, solve_least_squares, t_p_two_sided

INTERCEPT = "Mean/interc."

# published data-mining equation for the quality score
MLR_INTERCEPT = 0.896502
MLR_COEFFICIENTS = {
    "pigment_fastness": 0.067231,
    "machine_productivity": -0.1482945,
    "pile_weight": 0.000005,
}


@dataclass(frozen=True)
class Factor:
    name: str
    low: float
    center: float
    high: float

    def __post_init__(self):
        if not self.low < self.center < self.high:
            raise DesignError(f"factor {self.name!r}: need low < center < high")
        mid = 0.5 * (self.low + self.high)
        if abs(self.center - mid) > 1e-9 * max(abs(mid), 1.0):
            raise DesignError(f"factor {self.name!r}: center {self.center} is not the midpoint {mid}")

    @classmethod
    def from_range(cls, name, low, high):
        return cls(name, float(low), 0.5 * (low + high), float(high))

    @property
    def half_range(self) -> float:
        return 0.5 * (self.high - self.low)


def to_coded(f: Factor, natural):
    """``(natural - center) / half_range``; accepts scalars or arrays."""
    return (natural - f.center) / f.half_range


def from_coded(f: Factor, coded):
    return f.center + coded * f.half_range


def _level(f: Factor, c: float) -> float:
    # the three design levels map back to the stored values exactly
    exact = {-1.0: f.low, 0.0: f.center, 1.0: f.high}
    return float(exact[c]) if c in exact else float(from_coded(f, c))


@dataclass(frozen=True)
class Run:
    standard_order: int
    block: int
    coded: tuple
    natural: tuple

    @property
    def kind(self) -> str:
        nz = sum(c != 0 for c in self.coded)
        if nz == 0:
            return "center"
        return "corner" if nz == len(self.coded) else "axial"


@dataclass(frozen=True)
class ExperimentDesign:
    factors: tuple
    runs: tuple
    n_center: int

    @property
    def factor_names(self) -> list[str]:
        return [f.name for f in self.factors]

    @property
    def n_runs(self) -> int:
        return len(self.runs)

    def coded_matrix(self) -> np.ndarray:
        return np.array([r.coded for r in self.runs], dtype=float)

    def natural_matrix(self) -> np.ndarray:
        return np.array([r.natural for r in self.runs], dtype=float)

    def blocks(self) -> np.ndarray:
        return np.array([r.block for r in self.runs])


def _make_run(order, block, coded, factors):
    coded = tuple(float(c) for c in coded)
    natural = tuple(_level(f, c) for f, c in zip(factors, coded))
    return Run(order, block, coded, natural)


def build_ccf_design(factors: Sequence[Factor], n_center: int = 3) -> ExperimentDesign:
    """Three-factor face-centered central composite design in three blocks.

    Block 1 holds the half-fraction corners with ``x1*x2*x3 = -1``, block 2
    the corners with product +1, block 3 the six face points. Center runs are
    dealt round-robin to the blocks and numbered after each block's other
    runs. With three centers this gives 17 runs: corners 1-4, center 5,
    corners 6-9, center 10, face points 11-16, center 17.
    """
    factors = tuple(factors)
    if len(factors) != 3:
        raise DesignError(f"only the 3-factor layout is supported, got {len(factors)} factors")
    if n_center < 0:
        raise DesignError("n_center must be nonnegative")
    corners = list(itertools.product((-1, 1), repeat=3))
    half = {
        1: [c for c in corners if c[0] * c[1] * c[2] == -1],
        2: [c for c in corners if c[0] * c[1] * c[2] == 1],
    }
    axial = []
    for i in range(3):
        for s in (-1, 1):
            pt = [0, 0, 0]
            pt[i] = s
            axial.append(tuple(pt))
    per_block = [n_center // 3 + (1 if b < n_center % 3 else 0) for b in range(3)]
    pts = {1: half[1], 2: half[2], 3: axial}

    runs = []
    order = 1
    for b in (1, 2, 3):
        for c in pts[b] + [(0, 0, 0)] * per_block[b - 1]:
            runs.append(_make_run(order, b, c, factors))
            order += 1
    return ExperimentDesign(factors, tuple(runs), n_center)


def design_to_csv(design: ExperimentDesign, responses=None, response_name="response") -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    header = ["standard_order", "block"] + design.factor_names
    if responses is not None:
        header.append(response_name)
    w.writerow(header)
    for i, r in enumerate(design.runs):
        row = [r.standard_order, r.block] + [repr(v) for v in r.natural]
        if responses is not None:
            row.append(repr(float(responses[i])))
        w.writerow(row)
    return buf.getvalue()


def design_from_csv(text: str, factors: Sequence[Factor] | None = None,
                    response_name: str | None = None):
    """Parse a design file; returns ``(design, responses or None)``.

    Runs are returned sorted by standard order. When ``factors`` is omitted
    each factor spans the observed minimum and maximum of its column.
    """
    lines = [ln for ln in text.splitlines() if ln.strip() and not ln.startswith("#")]
    rows = list(csv.reader(lines))
    header = [h.strip() for h in rows[0]]
    if header[:2] != ["standard_order", "block"]:
        raise DesignError("design file must start with standard_order, block columns")
    body = [[c.strip() for c in r] for r in rows[1:]]
    names = header[2:]
    if response_name is None and factors is not None and len(names) == len(factors) + 1:
        response_name = names[-1]
    if response_name is not None and response_name in names:
        names = [n for n in names if n != response_name]
    body.sort(key=lambda r: int(r[0]))
    nat = np.array([[float(r[header.index(n)]) for n in names] for r in body])
    if factors is None:
        factors = [Factor.from_range(n, nat[:, j].min(), nat[:, j].max()) for j, n in enumerate(names)]
    factors = tuple(factors)
    if [f.name for f in factors] != names:
        raise DesignError(f"factor names {[f.name for f in factors]} do not match file columns {names}")
    runs = []
    for r, x in zip(body, nat):
        coded = tuple(float(np.round(to_coded(f, v), 12)) for f, v in zip(factors, x))
        runs.append(Run(int(r[0]), int(r[1]), coded, tuple(float(v) for v in x)))
    n_center = sum(r.kind == "center" for r in runs)
    responses = None
    if response_name is not None:
        j = header.index(response_name)
        responses = np.array([float(r[j]) for r in body])
    return ExperimentDesign(factors, tuple(runs), n_center), responses


@dataclass(frozen=True)
class EffectRow:
    term: str
    effect: float
    standard_error: float
    t: float
    p: float


@dataclass(frozen=True)
class AnovaRow:
    term: str
    ss: float
    df: int
    ms: float | None
    F: float | None
    p: float | None


@dataclass(frozen=True)
class SurfaceTerm:
    label: str
    kind: str  # intercept, block, linear, quadratic, interaction
    factors: tuple


def _terms(names, block_levels):
    terms = [SurfaceTerm(INTERCEPT, "intercept", ())]
    for j in range(1, len(block_levels)):
        terms.append(SurfaceTerm(f"Blocks ({j})", "block", ()))
    for i, n in enumerate(names):
        terms.append(SurfaceTerm(f"({i + 1}) {n} (L)", "linear", (i,)))
        terms.append(SurfaceTerm(f"{n} (Q)", "quadratic", (i,)))
    for i, j in itertools.combinations(range(len(names)), 2):
        terms.append(SurfaceTerm(f"{i + 1}L by {j + 1}L", "interaction", (i, j)))
    return terms


def _term_columns(terms, coded, blocks, block_levels):
    n = coded.shape[0]
    cols = []
    for t in terms:
        if t.kind == "intercept":
            cols.append(np.ones(n))
        elif t.kind == "block":
            j = int(t.label.split("(")[1].rstrip(")"))
            cols.append((blocks == block_levels[j]).astype(float) - (blocks == block_levels[0]))
        elif t.kind == "linear":
            cols.append(coded[:, t.factors[0]])
        elif t.kind == "quadratic":
            cols.append(coded[:, t.factors[0]] ** 2)
        else:
            cols.append(coded[:, t.factors[0]] * coded[:, t.factors[1]])
    return np.column_stack(cols)


@dataclass(frozen=True, eq=False)
class SurfaceFit:
    design: ExperimentDesign
    responses: np.ndarray
    terms: tuple
    block_levels: tuple
    solution: LeastSquaresSolution
    effects: tuple
    anova: tuple

    @property
    def residual_df(self) -> int:
        return self.solution.residual_df

    @property
    def fitted_values(self) -> np.ndarray:
        return self.responses - self.solution.residuals

    def coefficient(self, label) -> float:
        return self.solution.coef(label)

    def effect(self, label) -> EffectRow:
        for e in self.effects:
            if e.term == label:
                return e
        raise KeyError(label)

    def anova_row(self, label) -> AnovaRow:
        for a in self.anova:
            if a.term == label:
                return a
        raise KeyError(label)

    def surface_coefficients(self):
        """Coefficients of the non-block terms, in term order."""
        idx = [i for i, t in enumerate(self.terms) if t.kind != "block"]
        return [self.terms[i] for i in idx], self.solution.coefficients[idx]


def fit_response_surface(design: ExperimentDesign, responses) -> SurfaceFit:
    """Least-squares quadratic model in coded units, with effects and ANOVA."""
    y = np.asarray(responses, dtype=float).ravel()
    if y.size != design.n_runs:
        raise DesignError(f"{y.size} responses for {design.n_runs} runs")
    blocks = design.blocks()
    levels = tuple(sorted(set(blocks.tolist())))
    terms = tuple(_terms(design.factor_names, levels))
    X = _term_columns(terms, design.coded_matrix(), blocks, levels)
    sol = solve_least_squares(DesignMatrix(X, [t.label for t in terms]), y)
    partial = SurfaceFit(design, y, terms, levels, sol, (), ())
    return SurfaceFit(design, y, terms, levels, sol, tuple(effects_table(partial)),
                      tuple(anova_table(partial)))


def effects_table(fit: SurfaceFit) -> list[EffectRow]:
    sol = fit.solution
    se = sol.standard_errors()
    rows = []
    for i, t in enumerate(fit.terms):
        scale = 1.0 if t.kind == "intercept" else 2.0
        eff, s = scale * sol.coefficients[i], scale * se[i]
        if s > 0:
            tval = eff / s
            rows.append(EffectRow(t.label, float(eff), float(s), float(tval),
                                  t_p_two_sided(tval, sol.residual_df)))
        else:  # exact fit: no error variance to test against
            rows.append(EffectRow(t.label, float(eff), 0.0, math.nan, math.nan))
    return rows


def anova_table(fit: SurfaceFit) -> list[AnovaRow]:
    """Partial sums of squares per term, then Error and Total rows.

    Block contrasts form one multi-degree-of-freedom row. Error F and p are
    left empty.
    """
    sol = fit.solution
    mse = sol.sigma2
    groups = []
    blocks = [i for i, t in enumerate(fit.terms) if t.kind == "block"]
    if blocks:
        groups.append(("Blocks", blocks))
    groups += [(t.label, [i]) for i, t in enumerate(fit.terms) if t.kind not in ("intercept", "block")]
    rows = []
    for label, idx in groups:
        b = sol.coefficients[idx]
        V = sol.unscaled_covariance[np.ix_(idx, idx)]
        ss = float(b @ np.linalg.solve(V, b))
        df = len(idx)
        ms = ss / df
        if mse > 0:
            F = ms / mse
            rows.append(AnovaRow(label, ss, df, ms, F, f_p_upper(F, df, sol.residual_df)))
        else:
            rows.append(AnovaRow(label, ss, df, ms, math.nan, math.nan))
    rows.append(AnovaRow("Error", sol.sse, sol.residual_df, mse, None, None))
    y = fit.responses
    rows.append(AnovaRow("Total SS", float(np.sum((y - y.mean()) ** 2)), len(y) - 1, None, None, None))
    return rows


def _coded_levels(fit: SurfaceFit, levels) -> np.ndarray:
    factors = fit.design.factors
    if isinstance(levels, Mapping):
        missing = [f.name for f in factors if f.name not in levels]
        if missing:
            raise SpecError(f"no level given for factor {missing[0]!r}")
        nat = [float(levels[f.name]) for f in factors]
    else:
        nat = [float(v) for v in levels]
        if len(nat) != len(factors):
            raise SpecError(f"expected {len(factors)} levels, got {len(nat)}")
    return np.array([to_coded(f, v) for f, v in zip(factors, nat)])


def _predict_coded(fit: SurfaceFit, coded: np.ndarray) -> np.ndarray:
    coded = np.atleast_2d(coded)
    terms, coef = fit.surface_coefficients()
    X = _term_columns(terms, coded, np.zeros(coded.shape[0]), fit.block_levels)
    return X @ coef


def predict_surface(fit: SurfaceFit, levels) -> float:
    """Evaluate the fitted quadratic at natural factor levels.

    Block terms contribute zero (the average over blocks). A warning is
    issued when any coded level lies outside [-1, 1].
    """
    coded = _coded_levels(fit, levels)
    if np.any(np.abs(coded) > 1 + 1e-12):
        warnings.warn(f"extrapolating outside the design cube (coded {coded.tolist()})",
                      ExtrapolationWarning, stacklevel=2)
    return float(_predict_coded(fit, coded)[0])


def predict_mlr(pigment_fastness: float, machine_productivity: float, pile_weight: float) -> float:
    """Quality score from the fixed three-factor linear equation."""
    c = MLR_COEFFICIENTS
    return (MLR_INTERCEPT + c["pigment_fastness"] * pigment_fastness
            + c["machine_productivity"] * machine_productivity + c["pile_weight"] * pile_weight)


@dataclass(frozen=True)
class DesirabilitySpec:
    lo: float
    hi: float
    shape: float = 1.0
    goal: str = "maximize"

    def __post_init__(self):
        if self.goal != "maximize":
            raise SpecError(f"unsupported desirability goal {self.goal!r}")
        if not self.lo < self.hi:
            raise SpecError("desirability needs lo < hi")
        if not self.shape > 0:
            raise SpecError("desirability shape must be positive")


def desirability(yhat, spec: DesirabilitySpec):
    """0 below ``lo``, 1 above ``hi``, ``((y - lo)/(hi - lo))**shape`` between."""
    r = np.clip((np.asarray(yhat, dtype=float) - spec.lo) / (spec.hi - spec.lo), 0.0, 1.0)
    out = r**spec.shape
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class DesirabilityOptimum:
    coded: tuple
    natural: dict
    predicted: float
    desirability: float


def desirability_optimize(fit: SurfaceFit, spec: DesirabilitySpec | None = None,
                          grid_points: int = 41, refine_tol: float = 1e-9) -> DesirabilityOptimum:
    """Maximize desirability of the predicted response over the coded cube.

    A dense grid is searched first, then each coordinate is refined in turn
    with a shrinking local line search. Candidates are compared on
    desirability, then on the predicted response, so a plateau at
    desirability 1 resolves toward the highest prediction.
    """
    if spec is None:
        spec = DesirabilitySpec(float(fit.responses.min()), float(fit.responses.max()))
    k = len(fit.design.factors)
    axis = np.linspace(-1.0, 1.0, grid_points)
    grid = np.array(list(itertools.product(axis, repeat=k)))
    pred = _predict_coded(fit, grid)
    d = desirability(pred, spec)
    best = np.lexsort((pred, d))[-1]
    x = grid[best].copy()
    score = (d[best], pred[best])

    step = 2.0 / (grid_points - 1)
    while step > refine_tol:
        improved = False
        for i in range(k):
            line = np.clip(x[i] + np.linspace(-step, step, 21), -1.0, 1.0)
            cand = np.repeat(x[None, :], line.size, axis=0)
            cand[:, i] = line
            p = _predict_coded(fit, cand)
            dd = desirability(p, spec)
            j = np.lexsort((p, dd))[-1]
            if (dd[j], p[j]) > score:
                score = (dd[j], p[j])
                x = cand[j]
                improved = True
        if not improved:
            step /= 4.0
    natural = {f.name: _level(f, float(c)) for f, c in zip(fit.design.factors, x)}
    return DesirabilityOptimum(tuple(float(c) for c in x), natural, float(score[1]), float(score[0]))


def _fmt(v, width=12, digits=6):
    if v is None:
        return " " * width
    return f"{v:{width}.{digits}f}"


def render_effects(rows: Sequence[EffectRow], df: int) -> str:
    head = f"{'Factor':<34}{'Effect':>12}{'Std.Err.':>12}{f't ({df})':>12}{'p':>12}"
    lines = [head, "-" * len(head)]
    for r in rows:
        lines.append(f"{r.term:<34}{_fmt(r.effect)}{_fmt(r.standard_error)}"
                     f"{r.t:12.3f}{_fmt(r.p)}")
    return "\n".join(lines)


def render_anova(rows: Sequence[AnovaRow]) -> str:
    head = f"{'Factor':<34}{'SS':>12}{'df':>5}{'MS':>12}{'F':>12}{'p':>12}"
    lines = [head, "-" * len(head)]
    for r in rows:
        F = "" if r.F is None else f"{r.F:12.2f}"
        lines.append(f"{r.term:<34}{_fmt(r.ss)}{r.df:5d}{_fmt(r.ms)}{F:>12}{_fmt(r.p)}")
    return "\n".join(lines)


def render_design(design: ExperimentDesign, responses=None) -> str:
    head = f"{'Std':>4}{'Block':>6}" + "".join(f"{n[:18]:>20}" for n in design.factor_names)
    if responses is not None:
        head += f"{'Response':>12}"
    lines = [head]
    for i, r in enumerate(design.runs):
        tag = " (C)" if r.kind == "center" else ""
        line = f"{r.standard_order:>4}{r.block:>6}" + "".join(f"{v:20.6f}" for v in r.natural)
        if responses is not None:
            line += f"{responses[i]:12.6f}"
        lines.append(line + tag)
    return "\n".join(lines)


__all__ = [
    "AnovaRow", "DesirabilityOptimum", "DesirabilitySpec", "EffectRow", "ExperimentDesign",
    "Factor", "Run", "SurfaceFit", "anova_table", "build_ccf_design", "desirability",
    "desirability_optimize", "design_from_csv", "design_to_csv", "effects_table",
    "fit_response_surface", "from_coded", "predict_mlr", "predict_surface", "render_anova",
    "render_design", "render_effects", "to_coded",
]
