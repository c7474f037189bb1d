"""End-to-end orchestration: configuration, synthetic data, reports.

The pipeline runs ingest, imputation, score composition, splitting,
screening, model fitting, risk reporting, voting, expert overrides and the
designed-experiment half. Every stage writes one section of a
:class:`RunReport`; the human-readable report is rendered from the same
sections that go into the structured JSON file, so each printed table can be
rebuilt from the persisted output.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import math
import os
import zlib
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Mapping

import numpy as np

from . import bundled
from .data import (Dataset, QualityScoreSpec, compose_quality_score, impute_missing, load_reference,
                   load_table, split_train_test)
from .doe import (MLR_COEFFICIENTS, MLR_INTERCEPT, AnovaRow, DesirabilitySpec, EffectRow, Factor,
                  build_ccf_design, design_from_csv, desirability_optimize, fit_response_surface,
                  predict_mlr, render_anova, render_effects)
from .ensembles import (TrainConfig, fit_baseline, fit_boosted_trees, fit_random_forest,
                        model_summary, variable_importance)
from .errors import ConfigError, DesignError, QualityMineError
from .metrics import regression_metrics, risk_report
from .screening import OverrideRule, apply_overrides, screen_predictors, vote_rankings

log = logging.getLogger(__name__)

REPORT_FORMAT = "qualitymine-report"
REPORT_VERSION = 1
OUTPUT_ENV = "QUALITYMINE_OUTPUT_DIR"
BUNDLED_PREFIX = "bundled:"

SIGNAL_RANGES = {
    "Pigment fastness": (0.75, 1.0),
    "Machine productivity": (0.45, 0.93),
    "Pile weight": (1500.0, 2729.0),
}


def _version() -> str:
    from . import __version__
    return __version__


# ---------------------------------------------------------------- synthetic


def generate_synthetic(n_rows: int, n_noise_vars: int, noise_sd: float, seed: int) -> Dataset:
    """Production-like table whose response follows the linear quality equation.

    The three signal inputs are uniform over their factor ranges, the
    response is the equation plus Gaussian noise with standard deviation
    ``noise_sd``, and ``n_noise_vars`` unrelated uniform [0, 1] columns named
    ``noise_01``, ``noise_02``, ... are appended.
    """
    if n_rows < 10:
        raise ConfigError(f"n_rows must be at least 10, got {n_rows}")
    if n_noise_vars < 0:
        raise ConfigError("n_noise_vars must be nonnegative")
    if not noise_sd >= 0:
        raise ConfigError("noise_sd must be nonnegative")
    rng = np.random.default_rng(seed)
    data = {name: rng.uniform(lo, hi, n_rows) for name, (lo, hi) in SIGNAL_RANGES.items()}
    y = predict_mlr(data["Pigment fastness"], data["Machine productivity"], data["Pile weight"])
    y = y + noise_sd * rng.standard_normal(n_rows)
    width = max(2, len(str(n_noise_vars)))
    noise = rng.uniform(0.0, 1.0, (n_rows, n_noise_vars))
    for j in range(n_noise_vars):
        data[f"noise_{j + 1:0{width}d}"] = noise[:, j]
    data[bundled.RESPONSE_NAME] = y
    roles = {bundled.RESPONSE_NAME: "response"}
    return Dataset.from_arrays(f"synthetic-{seed}", data, roles)


# ------------------------------------------------------------------- config


@dataclass(frozen=True)
class PipelineConfig:
    """Validated run configuration.

    Exactly one of ``input`` and ``synthetic`` names the data source. Paths
    may be absolute, relative to ``base_dir``, or ``bundled:<file>`` for the
    files shipped with the package.
    """

    input: str | None = None
    synthetic: dict | None = None
    schema: dict | None = None
    response: str | None = None
    missing_token: str = ""
    imputation: dict = field(default_factory=lambda: {"strategy": "column-mean"})
    quality_score: dict | None = None
    test_fraction: float = 0.3
    screening: dict = field(default_factory=lambda: {"k": 16, "n_trees": 200})
    forest: dict = field(default_factory=dict)
    boosting: dict = field(default_factory=dict)
    baselines: dict = field(default_factory=lambda: {"knn": {"k": 5}, "ols": {}})
    vote: dict = field(default_factory=lambda: {"m": 4})
    overrides: list = field(default_factory=list)
    final_count: int = 3
    doe: dict | None = None
    seed: int = 0
    output_dir: str = "qualitymine-out"
    base_dir: str = "."

    # keys that change where or how fast outputs are produced, never their content
    _NON_CONTENT = ("output_dir", "base_dir")

    def resolved(self) -> dict:
        d = asdict(self)
        for k in self._NON_CONTENT:
            d.pop(k)
        return d

    def digest(self) -> str:
        text = json.dumps(self.resolved(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode("utf-8")).hexdigest()

    def path(self, ref: str) -> str:
        if ref.startswith(BUNDLED_PREFIX):
            return ref
        p = Path(ref)
        return str(p if p.is_absolute() else Path(self.base_dir) / p)

    def read(self, ref: str) -> str:
        """Text of a referenced file or bundled resource."""
        if ref.startswith(BUNDLED_PREFIX):
            try:
                return bundled.read_text(ref[len(BUNDLED_PREFIX):])
            except FileNotFoundError:
                raise ConfigError(f"no bundled file {ref!r}") from None
        with open(self.path(ref), encoding="utf-8") as fh:
            return fh.read()


_KEYS = {f for f in PipelineConfig.__dataclass_fields__ if not f.startswith("_")}


def _check_path(cfg: PipelineConfig, ref, what):
    if not isinstance(ref, str):
        raise ConfigError(f"{what} must be a path string")
    if ref.startswith(BUNDLED_PREFIX):
        cfg.read(ref)
    elif not os.path.isfile(cfg.path(ref)):
        raise ConfigError(f"{what} {ref!r} does not exist")


def load_config(source, *, seed: int | None = None) -> PipelineConfig:
    """Build a :class:`PipelineConfig` from a JSON file path or a mapping.

    ``seed`` replaces the configured seed when given.
    """
    base = "."
    if isinstance(source, Mapping):
        raw = dict(source)
    else:
        if str(source).startswith(BUNDLED_PREFIX):
            text = bundled.read_text(str(source)[len(BUNDLED_PREFIX):])
        else:
            try:
                with open(source, encoding="utf-8") as fh:
                    text = fh.read()
            except OSError as exc:
                raise ConfigError(f"cannot read config {source}: {exc.strerror}") from None
            base = str(Path(source).resolve().parent)
        try:
            raw = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from None
        if not isinstance(raw, dict):
            raise ConfigError("config must be a JSON object")
    raw.pop("$comment", None)
    unknown = sorted(set(raw) - _KEYS)
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    raw.setdefault("base_dir", base)
    if seed is not None:
        raw["seed"] = int(seed)
    try:
        cfg = PipelineConfig(**raw)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None
    validate_config(cfg)
    return cfg


def validate_config(cfg: PipelineConfig) -> None:
    if (cfg.input is None) == (cfg.synthetic is None):
        raise ConfigError("give exactly one of 'input' and 'synthetic'")
    if cfg.input is not None:
        _check_path(cfg, cfg.input, "input")
        if cfg.schema is None and cfg.response is None and cfg.quality_score is None:
            raise ConfigError("an input file needs 'schema', 'response' or 'quality_score'")
    else:
        extra = set(cfg.synthetic) - {"n_rows", "n_noise_vars", "noise_sd"}
        if extra:
            raise ConfigError(f"unknown synthetic keys: {', '.join(sorted(extra))}")
    ref = (cfg.imputation or {}).get("reference")
    if ref is not None:
        _check_path(cfg, ref, "imputation reference")
    if not isinstance(cfg.seed, int):
        raise ConfigError("seed must be an integer")
    if not isinstance(cfg.final_count, int) or cfg.final_count < 1:
        raise ConfigError("final_count must be a positive integer")
    k = cfg.screening.get("k")
    if not isinstance(k, int) or k < 1:
        raise ConfigError("screening.k must be a positive integer")
    if k < cfg.final_count:
        raise ConfigError(f"screening.k ({k}) is smaller than final_count ({cfg.final_count})")
    if not 0 < cfg.test_fraction < 1:
        raise ConfigError("test_fraction must lie in (0, 1)")
    for section in ("forest", "boosting"):
        bad = set(getattr(cfg, section)) - set(TrainConfig.__dataclass_fields__) - {"seed"}
        if bad:
            raise ConfigError(f"unknown {section} keys: {', '.join(sorted(bad))}")
    bad = set(cfg.baselines) - {"knn", "ols"}
    if bad:
        raise ConfigError(f"unknown baselines: {', '.join(sorted(bad))}")
    rankings = cfg.vote.get("rankings")
    if rankings is not None:
        _check_path(cfg, rankings, "vote.rankings")
    for rule in cfg.overrides:
        if not isinstance(rule, Mapping) or set(rule) != {"remove", "insert", "justification"}:
            raise ConfigError("each override needs exactly 'remove', 'insert' and 'justification'")
    if cfg.doe is not None:
        factors = cfg.doe.get("factors", "derive")
        if isinstance(factors, str) and factors != "derive":
            _check_path(cfg, factors, "doe.factors")
        responses = cfg.doe.get("responses")
        if isinstance(responses, str) and responses != "ols":
            _check_path(cfg, responses, "doe.responses")


def paper_config() -> PipelineConfig:
    """The bundled configuration that runs the full flow on the 17 design runs."""
    return load_config(BUNDLED_PREFIX + "paper_config.json")


def synthetic_config(seed: int = 0, n_rows: int = 2000, n_noise_vars: int = 68,
                     noise_sd: float = 0.01, **overrides) -> PipelineConfig:
    """A run over :func:`generate_synthetic` data that derives design levels."""
    raw = {
        "synthetic": {"n_rows": n_rows, "n_noise_vars": n_noise_vars, "noise_sd": noise_sd},
        "seed": seed,
        "doe": {"factors": "derive", "responses": "ols"},
    }
    raw.update(overrides)
    return load_config(raw)


# ------------------------------------------------------------------- report


def _plain(v):
    """JSON-safe copy with numpy scalars and arrays turned into Python types."""
    if isinstance(v, Mapping):
        return {str(k): _plain(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_plain(x) for x in v]
    if isinstance(v, np.ndarray):
        return [_plain(x) for x in v.tolist()]
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return v if math.isfinite(v) else None
    return v


@dataclass
class RunReport:
    """Stage sections plus a reproducibility block."""

    kind: str
    status: str = "ok"
    sections: dict = field(default_factory=dict)
    reproducibility: dict = field(default_factory=dict)
    failed_stage: str | None = None
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.status == "ok"

    def to_dict(self) -> dict:
        return _plain({
            "format": REPORT_FORMAT,
            "version": REPORT_VERSION,
            "kind": self.kind,
            "status": self.status,
            "failed_stage": self.failed_stage,
            "error": self.error,
            "reproducibility": self.reproducibility,
            "sections": self.sections,
        })

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=1) + "\n"

    def to_text(self) -> str:
        # render what a reader of report.json would see, key order included
        return render_report(json.loads(self.to_json()))

    def write(self, out_dir) -> dict[str, str]:
        """Write ``report.json`` and ``report.txt``; a ``FAILED`` file marks failure."""
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        paths = {"json": out / "report.json", "text": out / "report.txt"}
        paths["json"].write_text(self.to_json(), encoding="utf-8")
        paths["text"].write_text(self.to_text(), encoding="utf-8")
        marker = out / "FAILED"
        if self.ok:
            if marker.exists():
                marker.unlink()
        else:
            marker.write_text(f"{self.failed_stage}: {self.error}\n", encoding="utf-8")
            paths["marker"] = marker
        return {k: str(p) for k, p in paths.items()}

    @classmethod
    def from_dict(cls, d: Mapping) -> "RunReport":
        if d.get("format") != REPORT_FORMAT:
            raise QualityMineError("not a qualitymine report")
        if d.get("version") != REPORT_VERSION:
            raise QualityMineError(f"unsupported report version {d.get('version')}")
        return cls(d["kind"], d["status"], dict(d["sections"]), dict(d["reproducibility"]),
                   d.get("failed_stage"), d.get("error"))


class PipelineError(QualityMineError):
    """A stage failed; ``report`` holds the sections completed before it."""

    def __init__(self, stage: str, cause: BaseException, report: RunReport):
        super().__init__(f"[{stage}] {cause}")
        self.stage = stage
        self.cause = cause
        self.report = report


def _effect_rows(rows):
    return [EffectRow(r["term"], r["effect"], r["standard_error"], r["t"], r["p"]) for r in rows]


def _anova_rows(rows):
    return [AnovaRow(r["term"], r["ss"], r["df"], r["ms"], r["F"], r["p"]) for r in rows]


def _table(header, rows, widths, align=None):
    align = align or "<" + ">" * (len(widths) - 1)
    fmt = lambda cells: "".join(  # noqa: E731
        f"{c:{a}{w}}" for c, w, a in zip(cells, widths, align))
    lines = [fmt(header), "-" * sum(widths)]
    lines += [fmt(r) for r in rows]
    return "\n".join(lines)


def _num(v, digits=6):
    return "" if v is None else f"{v:.{digits}f}"


def render_report(d: Mapping) -> str:
    """Fixed-width text for a structured report dictionary."""
    s = d["sections"]
    rep = d["reproducibility"]
    out = [f"qualitymine {d['kind']} report", "=" * 40,
           f"status: {d['status']}"]
    if d["status"] != "ok":
        out.append(f"FAILED at stage {d['failed_stage']}: {d['error']}")
    out.append("seed: {}  config: {}  toolkit: {}".format(
        rep.get("seed"), (rep.get("config_digest") or "-")[:16], rep.get("toolkit_version")))

    def block(title, body):
        out.extend(["", title, "-" * len(title), body])

    if "ingest" in s:
        g = s["ingest"]
        body = f"{g['name']}: {g['n_rows']} rows, {g['n_inputs']} inputs, response {g['response']}"
        if "imputed_cells" in g:
            body += f"\nimputed {g['imputed_cells']} cells ({g['imputation']})"
        block("Data", body)
    if "split" in s:
        block("Split", f"train {s['split']['n_train']} rows, test {s['split']['n_test']} rows")
    if "screening" in s:
        sc = s["screening"]
        rows = [(str(i + 1), n, f"{v:.2f}") for i, (n, v) in enumerate(sc["ranking"])]
        block(f"Predictor screening (top {sc['k']} of {sc['n_inputs']})",
              _table(("rank", "variable", "importance"), rows, (6, 34, 12), "<<>"))
    if "models" in s:
        rows = []
        for name, m in s["models"].items():
            for split in ("train", "test"):
                r = m["risk"][split]
                rows.append((name, split, _num(r["risk_estimate"], 8), _num(r["standard_error"], 8),
                             str(r["n"])))
        block("Model risk (mean squared error)",
              _table(("model", "split", "risk", "std.err.", "n"), rows, (16, 8, 14, 14, 8), "<<>>>"))
        for name, m in s["models"].items():
            if "importance" in m:
                rows = [(str(i + 1), n, f"{v:.2f}") for i, (n, v) in enumerate(m["importance"][:8])]
                block(f"Importance: {name}",
                      _table(("rank", "variable", "importance"), rows, (6, 34, 12), "<<>"))
    if "vote" in s:
        v = s["vote"]
        lists = v["rankings"]
        names = list(lists)
        rows = []
        for i in range(v["m"]):
            rows.append((str(i + 1), *[lists[n][i] for n in names], v["voted"][i]))
        widths = (6,) + (26,) * (len(names) + 1)
        block(f"Vote (top {v['m']}, source {v['source']})",
              _table(("rank", *names, "voted"), rows, widths, "<" * len(widths)))
    if "overrides" in s:
        o = s["overrides"]
        body = "\n".join(f"{r['remove']} -> {r['insert']}: {r['justification']}" for r in o["rules"])
        body = (body + "\n" if body else "") + "selected factors: " + ", ".join(o["factors"])
        block("Expert overrides", body)
    if "design" in s:
        ds = s["design"]
        names = [f["name"] for f in ds["factors"]]
        has_y = ds.get("responses") is not None
        head = ("std", "block", *names) + (("response",) if has_y else ())
        rows = []
        for i, r in enumerate(ds["runs"]):
            cells = (str(r["standard_order"]), str(r["block"]), *[f"{x:.6g}" for x in r["natural"]])
            if has_y:
                cells += (f"{ds['responses'][i]:.6f}",)
            rows.append(cells)
        block(f"Design ({len(rows)} runs, {ds['n_center']} centers)",
              _table(head, rows, (5, 7) + (22,) * len(names) + ((12,) if has_y else ())))
    if "surface" in s:
        sf = s["surface"]
        block("Effect estimates", render_effects(_effect_rows(sf["effects"]), sf["residual_df"]))
        block("ANOVA", render_anova(_anova_rows(sf["anova"])))
    if "optimum" in s:
        op = s["optimum"]
        body = "\n".join(f"{k}: {v:.6g}" for k, v in op["natural"].items())
        body += f"\npredicted {op['predicted']:.6f}, desirability {op['desirability']:.4f}"
        block("Desirability optimum", body)
    if "checks" in s:
        ck = s["checks"]
        lines = [_check_line(c) for c in ck["items"]]
        lines.append(f"{ck['n_pass']} passed, {ck['n_fail']} failed")
        block("Reference checks", "\n".join(lines))
    return "\n".join(out) + "\n"


# ------------------------------------------------------------------ stages


def _stage_seed(seed: int, stage: str) -> int:
    ss = np.random.SeedSequence([seed & 0xFFFFFFFF, zlib.crc32(stage.encode())])
    return int(ss.generate_state(1, dtype=np.uint32)[0])


def _ingest(cfg: PipelineConfig) -> Dataset:
    if cfg.synthetic is not None:
        sy = cfg.synthetic
        return generate_synthetic(int(sy.get("n_rows", 2000)), int(sy.get("n_noise_vars", 68)),
                                  float(sy.get("noise_sd", 0.01)), _stage_seed(cfg.seed, "synthetic"))
    text = cfg.read(cfg.input)
    header = None
    for line in text.splitlines():
        if line.strip() and not line.startswith("#"):
            header = next(csv.reader([line]))
            break
    if header is None:
        raise ConfigError(f"input {cfg.input!r} has no header row")
    schema = dict(cfg.schema or {})
    for h in header:
        if h not in schema:
            schema[h] = "response" if h == cfg.response else "input"
    name = Path(cfg.input.removeprefix(BUNDLED_PREFIX)).stem
    return load_table(text, schema, missing_token=cfg.missing_token, name=name, comment="#")


def _levels_from_csv(text) -> list[Factor]:
    rows = list(csv.DictReader(ln for ln in text.splitlines() if ln.strip() and not ln.startswith("#")))
    try:
        return [Factor(r["factor"], float(r["low"]), float(r.get("medium") or
                                                            (float(r["low"]) + float(r["high"])) / 2),
                       float(r["high"])) for r in rows]
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"bad factor level file: {exc}") from None


def _design_factors(cfg, doe, data: Dataset, selected):
    spec = doe.get("factors", "derive")
    if spec == "derive":
        lo_q, hi_q = doe.get("percentiles", [0, 100])
        factors = []
        for name in selected:
            x = data[name].observed()
            lo, hi = np.percentile(x, [lo_q, hi_q])
            factors.append(Factor.from_range(name, float(lo), float(hi)))
        return factors
    if isinstance(spec, str):
        factors = _levels_from_csv(cfg.read(spec))
    else:
        factors = [Factor.from_range(f["name"], float(f["low"]), float(f["high"])) for f in spec]
    if sorted(f.name for f in factors) != sorted(selected):
        raise DesignError(f"design factors {[f.name for f in factors]} do not match the "
                          f"selected factors {list(selected)}")
    return factors


def _design_responses(cfg, doe, design, train, response_name):
    spec = doe.get("responses")
    if spec is None:
        return None, None
    if spec == "ols":
        names = list(design.factor_names)
        roles = {n: ("input" if n in names else "ignored") for n in train.input_names}
        model = fit_baseline(train.with_roles(roles), "ols")
        order = [model.feature_names.index(n) for n in names]
        X = np.array([r.natural for r in design.runs])
        Xm = np.empty_like(X)
        Xm[:, order] = X
        return model.predict_matrix(Xm), "ols"
    if isinstance(spec, str):
        given, y = design_from_csv(cfg.read(spec), design.factors,
                                   doe.get("response_column", response_name))
        if [(r.standard_order, r.block, r.natural) for r in given.runs] != \
                [(r.standard_order, r.block, r.natural) for r in design.runs]:
            raise DesignError(f"design in {spec!r} differs from the generated design")
        return y, spec
    y = np.asarray(spec, dtype=float)
    if y.shape != (design.n_runs,):
        raise DesignError(f"{y.size} responses given for {design.n_runs} runs")
    return y, "config"


def _design_section(design, y):
    return {
        "factors": [{"name": f.name, "low": f.low, "center": f.center, "high": f.high}
                    for f in design.factors],
        "n_center": design.n_center,
        "runs": [{"standard_order": r.standard_order, "block": r.block, "kind": r.kind,
                  "coded": list(r.coded), "natural": list(r.natural)} for r in design.runs],
        "responses": None if y is None else list(y),
    }


def _surface_sections(fit, desir):
    surface = {
        "residual_df": fit.residual_df,
        "effects": [asdict(e) for e in fit.effects],
        "anova": [asdict(a) for a in fit.anova],
        "coefficients": {t.label: c for t, c in zip(fit.terms, fit.solution.coefficients)},
    }
    spec = None
    if desir:
        spec = DesirabilitySpec(float(desir["lo"]), float(desir["hi"]), float(desir.get("shape", 1.0)))
    opt = desirability_optimize(fit, spec)
    optimum = {"coded": list(opt.coded), "natural": opt.natural, "predicted": opt.predicted,
               "desirability": opt.desirability,
               "spec": asdict(spec) if spec else {"lo": float(fit.responses.min()),
                                                  "hi": float(fit.responses.max()),
                                                  "shape": 1.0, "goal": "maximize"}}
    return surface, optimum


def _read_rankings(cfg, ref, columns):
    text = cfg.read(ref)
    rows = list(csv.DictReader(ln for ln in text.splitlines() if ln.strip() and not ln.startswith("#")))
    if not rows:
        raise ConfigError(f"rankings file {ref!r} is empty")
    cols = columns or [c for c in rows[0] if c not in ("rank", "voted")]
    missing = [c for c in cols if c not in rows[0]]
    if missing:
        raise ConfigError(f"rankings file {ref!r} lacks columns {missing}")
    return {c: [r[c] for r in rows if r[c]] for c in cols}


def _risk_block(model, train, test):
    out = {}
    for split, d in (("train", train), ("test", test)):
        pred = model.predict_matrix(d.matrix(model.feature_names))
        out[split] = asdict(risk_report(pred, d.response(), split))
        out[split]["metrics"] = asdict(regression_metrics(pred, d.response()))
    return out


def prepare_dataset(cfg: PipelineConfig, sections: dict | None = None,
                    on_stage=lambda name: None) -> Dataset:
    """Ingest, impute and compose the response as the configuration asks.

    ``sections`` receives the ``ingest`` (and ``quality_score``) report
    entries; ``on_stage`` is called with each stage name as it starts.
    """
    s = {} if sections is None else sections
    on_stage("ingest")
    data = _ingest(cfg)
    s["ingest"] = {"name": data.name, "n_rows": data.n_rows, "n_inputs": len(data.input_names),
                   "response": data.response_name,
                   "n_missing": {c.name: c.n_missing for c in data.columns if c.n_missing}}

    on_stage("impute")
    n_missing = sum(c.n_missing for c in data.columns if c.role != "ignored")
    if n_missing:
        imp = dict(cfg.imputation)
        ref = imp.get("reference")
        ref_vals = load_reference(cfg.read(ref)) if ref else None
        data = impute_missing(data, imp.get("strategy", "column-mean"), ref_vals)
        s["ingest"]["imputed_cells"] = n_missing
        s["ingest"]["imputation"] = imp.get("strategy", "column-mean")

    on_stage("quality_score")
    if cfg.quality_score is not None:
        q = cfg.quality_score
        comps = q.get("components", [])
        weights = q.get("weights") or [1.0] * len(comps)
        if len(weights) != len(comps):
            raise ConfigError("quality_score.weights must match components")
        spec = QualityScoreSpec(tuple(zip(comps, weights)), q.get("output_name", "quality_score"))
        data = compose_quality_score(data, spec)
        data = data.with_roles({c: "ignored" for c in comps})
        s["quality_score"] = {"output_name": spec.output_name,
                              "weights": [[n, w] for n, w in spec.normalized()]}
        s["ingest"]["response"] = data.response_name
        s["ingest"]["n_inputs"] = len(data.input_names)
    if data.response_name is None:
        raise ConfigError("no response column: set 'response', 'schema' or 'quality_score'")
    return data


def run_pipeline(config, *, out_dir=None, n_jobs: int = 1, write: bool = True) -> RunReport:
    """Run every stage of the analysis for one configuration.

    Parameters
    ----------
    config : PipelineConfig, mapping or path
    out_dir : path, optional
        Overrides the output directory from the environment and the config.
    n_jobs : int
        Worker threads for forest fitting; results do not depend on it.
    write : bool
        Write ``report.json`` and ``report.txt`` (and ``FAILED`` on error).

    Raises
    ------
    ConfigError
        The configuration is invalid. Nothing is written.
    PipelineError
        A stage failed. Partial outputs are written first.
    """
    cfg = config if isinstance(config, PipelineConfig) else load_config(config)
    report = RunReport("pipeline", reproducibility={
        "seed": cfg.seed, "config_digest": cfg.digest(), "toolkit_version": _version()})
    out_dir = out_dir or os.environ.get(OUTPUT_ENV) or cfg.path(cfg.output_dir)
    s = report.sections
    stage = "ingest"

    def set_stage(name):
        nonlocal stage
        stage = name

    def run():
        nonlocal stage
        data = prepare_dataset(cfg, s, set_stage)

        stage = "split"
        train, test = split_train_test(data, cfg.test_fraction, _stage_seed(cfg.seed, "split"))
        s["split"] = {"n_train": train.n_rows, "n_test": test.n_rows,
                      "test_fraction": cfg.test_fraction}

        stage = "screening"
        sc = cfg.screening
        sconf = TrainConfig.forest(n_trees=int(sc.get("n_trees", 200)),
                                   seed=_stage_seed(cfg.seed, "screening"))
        screened = screen_predictors(train, int(sc["k"]), config=sconf, n_jobs=n_jobs)
        s["screening"] = {"k": int(sc["k"]), "n_inputs": len(train.input_names),
                          "ranking": [[n, v] for n, v in screened.ranking.entries]}
        keep = screened.dataset
        test_k = test.with_roles({n: "ignored" for n in test.input_names if n not in keep.input_names})

        stage = "models"
        forest = fit_random_forest(keep, TrainConfig.forest(
            **{"seed": _stage_seed(cfg.seed, "forest"), **cfg.forest}), n_jobs=n_jobs)
        boosted = fit_boosted_trees(keep, TrainConfig.boosting(
            **{"seed": _stage_seed(cfg.seed, "boosting"), **cfg.boosting}))
        models = {"random_forest": forest, "boosted_trees": boosted}
        for kind, params in sorted(cfg.baselines.items()):
            models[kind] = fit_baseline(keep, kind, params)
        s["models"] = {}
        for name, m in models.items():
            sec = {"risk": _risk_block(m, keep, test_k)}
            if name in ("random_forest", "boosted_trees"):
                summ = model_summary(m)
                sec.update({k: v for k, v in summ.items() if k != "kind"})
            elif name == "ols":
                sec["coefficients"] = {"(intercept)": m.intercept,
                                       **{n: float(c) for n, c in zip(m.feature_names, m.coefficients)}}
            s["models"][name] = sec

        stage = "vote"
        m = int(cfg.vote.get("m", 4))
        if cfg.vote.get("rankings"):
            lists = _read_rankings(cfg, cfg.vote["rankings"], cfg.vote.get("columns"))
            source = cfg.vote["rankings"]
        else:
            lists = {"random_forest": variable_importance(forest).variables,
                     "boosted_trees": variable_importance(boosted).variables}
            source = "models"
        voted = vote_rankings(list(lists.values()), m, list(lists))
        s["vote"] = {"m": m, "source": source,
                     "rankings": {k: list(v)[:m] for k, v in lists.items()},
                     "voted": list(voted.variables), "provenance": voted.provenance}

        stage = "overrides"
        rules = [OverrideRule(r["remove"], r["insert"], r["justification"]) for r in cfg.overrides]
        factors = apply_overrides(voted, rules, cfg.final_count)
        s["overrides"] = {"rules": [asdict(r) for r in rules], "final_count": cfg.final_count,
                          "factors": factors}

        if cfg.doe is None:
            return
        stage = "design"
        doe = cfg.doe
        design = build_ccf_design(_design_factors(cfg, doe, data, factors), int(doe.get("n_center", 3)))
        y, origin = _design_responses(cfg, doe, design, keep, data.response_name)
        s["design"] = _design_section(design, y)
        s["design"]["response_source"] = origin
        if y is None:
            return

        stage = "surface"
        fit = fit_response_surface(design, y)
        s["surface"], s["optimum"] = _surface_sections(fit, doe.get("desirability"))

    try:
        run()
    except ConfigError:
        raise
    except (QualityMineError, ValueError, KeyError, OSError) as exc:
        report.status = "FAILED"
        report.failed_stage = stage
        report.error = f"{type(exc).__name__}: {exc}"
        log.error("stage %s failed: %s", stage, exc)
        if write:
            report.write(out_dir)
        raise PipelineError(stage, exc, report) from exc
    if write:
        report.write(out_dir)
    return report


# -------------------------------------------------------------- reproduce


@dataclass(frozen=True)
class Check:
    group: str
    cell: str
    expected: float
    got: float
    tol: float

    @property
    def passed(self) -> bool:
        return abs(self.got - self.expected) <= self.tol


def _check_line(c: Mapping) -> str:
    word = "PASS" if c["passed"] else "FAIL"
    return (f"{word} {c['group']}/{c['cell']}: expected {c['expected']:.6g} "
            f"got {c['got']:.6g} (tol {c['tol']:.1g})")


# tolerance on each published cell; F is printed to 2 decimals, so half a unit
# in that place is allowed where it exceeds the relative tolerance
EFFECT_TOL = {"effect": 5e-6, "standard_error": 5e-6, "t": 0.05, "p": 1e-4}
ANOVA_SS_TOL = 1e-6
ANOVA_F_REL = 0.005
ANOVA_P_TOL = {"(1) Pigment fastness (L)": 1e-6}
MLR_TABLE_TOL = 1e-3
MLR_EXACT_TOL = 1e-9


def _mlr_direct(pf, mp, pw):
    c = MLR_COEFFICIENTS
    return MLR_INTERCEPT + c["pigment_fastness"] * pf + c["machine_productivity"] * mp + c["pile_weight"] * pw


def reproduce_checks(design_text: str | None = None) -> tuple[list[Check], dict]:
    """Compare the designed-experiment results with the published tables.

    ``design_text`` replaces the bundled design file, which is how a
    corrupted response is shown to be caught.
    """
    checks: list[Check] = []
    factors = bundled.factor_levels()
    built = build_ccf_design(factors, 3)
    given, y = design_from_csv(design_text or bundled.read_text(bundled.DESIGN_FILE), factors,
                               bundled.RESPONSE_NAME)
    key = lambda d: sorted((r.block, r.natural) for r in d.runs)  # noqa: E731
    echo_ok = key(built) == key(given)
    checks.append(Check("design", "17 (block, level) rows", 1.0, 1.0 if echo_ok else 0.0, 0.0))
    # responses follow the bundled file; map them onto the generated design by settings
    by_setting = {(r.block, r.natural): v for r, v in zip(given.runs, y)}
    y_built = np.array([by_setting.get((r.block, r.natural), np.nan) for r in built.runs])
    fit = fit_response_surface(built, y_built)

    for ref in bundled.effects_reference():
        row = fit.effect(ref["term"])
        for k, tol in EFFECT_TOL.items():
            checks.append(Check("effects", f"{ref['term']}/{k}", ref[k], getattr(row, k), tol))
    for ref in bundled.anova_reference():
        row = fit.anova_row(ref["term"])
        checks.append(Check("anova", f"{ref['term']}/df", ref["df"], row.df, 0))
        checks.append(Check("anova", f"{ref['term']}/ss", ref["ss"], row.ss, ANOVA_SS_TOL))
        if ref["F"] is not None:
            tol = max(ANOVA_F_REL * abs(ref["F"]), 0.005)
            checks.append(Check("anova", f"{ref['term']}/F", ref["F"], row.F, tol))
        if ref["p"] is not None:
            checks.append(Check("anova", f"{ref['term']}/p", ref["p"], row.p,
                                ANOVA_P_TOL.get(ref["term"], 1e-4)))

    for r in bundled.mlr_estimates():
        cell = f"order {int(r['standard_order'])}"
        pred = predict_mlr(r["Pigment fastness"], r["Machine productivity"], r["Pile weight"])
        checks.append(Check("mlr", f"{cell}/table", r["estimated"], pred, MLR_TABLE_TOL))
        checks.append(Check("mlr", f"{cell}/equation",
                            _mlr_direct(r["Pigment fastness"], r["Machine productivity"], r["Pile weight"]),
                            pred, MLR_EXACT_TOL))

    ranks = bundled.published_rankings()
    voted = vote_rankings([ranks["random_forest"], ranks["boosted_tree"]], 4)
    for i, name in enumerate(ranks["voted"]):
        checks.append(Check("vote", f"rank {i + 1} = {name}", 1.0, float(voted.variables[i] == name), 0.0))
    rule = OverrideRule("Tufts", "Pigment fastness",
                        "Tufts is fixed by the product specification and cannot be set on the line")
    final = apply_overrides(voted, [rule], 3)
    want = sorted(f.name for f in factors)
    checks.append(Check("vote", "overridden factors = design factors", 1.0, float(sorted(final) == want), 0.0))

    sections = {"design": _design_section(built, y_built)}
    sections["surface"], sections["optimum"] = _surface_sections(fit, None)
    sections["vote"] = {"m": 4, "source": "published", "voted": list(voted.variables),
                        "rankings": {"random_forest": ranks["random_forest"],
                                     "boosted_tree": ranks["boosted_tree"]},
                        "provenance": voted.provenance}
    sections["overrides"] = {"rules": [asdict(rule)], "final_count": 3, "factors": final}
    return checks, sections


def reproduce_paper(design_text: str | None = None) -> RunReport:
    """Run the designed-experiment half on bundled data and check every published cell."""
    checks, sections = reproduce_checks(design_text)
    items = [{**asdict(c), "passed": c.passed} for c in checks]
    n_fail = sum(not c.passed for c in checks)
    sections["checks"] = {"items": items, "n_pass": len(checks) - n_fail, "n_fail": n_fail}
    rep = RunReport("reproduce", sections=sections, reproducibility={
        "seed": None, "config_digest": hashlib.sha256(
            bundled.read_text(bundled.DESIGN_FILE).encode() if design_text is None
            else design_text.encode()).hexdigest(),
        "toolkit_version": _version()})
    if n_fail:
        rep.status = "FAILED"
        rep.failed_stage = "checks"
        bad = [f"{c.group}/{c.cell}" for c in checks if not c.passed]
        rep.error = f"{n_fail} cells outside tolerance: " + ", ".join(bad)
    return rep


def dump_csv(rows, header) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()
