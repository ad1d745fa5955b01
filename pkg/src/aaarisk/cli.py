"""Command-line interface.

Subcommands and the files they write into ``--out``:

screen
    screening.csv, violin_summary.csv, violin/<feature>.csv,
    scatter_top<N>.csv, violins.svg, scatter_matrix.svg
evaluate
    eval_<pipeline>.json, risk_curve_<pipeline>.csv, roc_<pipeline>.csv,
    ci.csv, summary.csv, summary.json, risk_curves.svg, ci.svg, roc.svg
overlap
    overlap.csv, overlap.svg
synth
    population_summary.json, study.csv, oracle_report.json
importance
    importance_<panel>.csv for MannWhitney, SparseL, AIC and BIC,
    importance.svg

Settings come from built-in defaults, then ``--config`` (``key = value``
lines, ``#`` comments), then explicit flags.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, fields, replace
from pathlib import Path


from .dataset import (
    CostSpec,
    PriorSpec,
    StudyFormatError,
    load_study,
    standardize,
    write_study,
)
from .evaluation import evaluate_pipeline, misclassification_matrix
from .models import PIPELINE_KINDS, PipelineSpec, fit_pipeline, kmeans2
from .optim import FitError
from .shift import ShiftContext
from .stats import screen_features, standardized_importance, violin_data
from .synth import DEFAULT_SPEC, PopulationSpec, draw_case_control, generate_population, shift_check


@dataclass(frozen=True)
class RunConfig:
    input: str | None = None
    label_column: str = "group"
    l0: float = 1.0
    l1: float = 7.72
    p1: float = 84 / 733
    folds: int = 12
    seed: int = 0
    pipelines: tuple[str, ...] = PIPELINE_KINDS
    lambda_points: int = 50
    lambda_folds: int = 5
    pca_k: int = 5
    bootstrap: int = 2000
    level: float = 0.90
    cutoff: str = "tuned"
    stratify: bool = False
    top: int = 16
    jobs: int = 1
    out: str = "out"
    # synth
    n_pop: int = 100_000
    n0: int = 100
    n1: int = 44
    intercept: float = DEFAULT_SPEC.intercept
    coef: tuple[float, ...] = DEFAULT_SPEC.coefficients
    n_test: int = 10_000

    @property
    def cost(self) -> CostSpec:
        return CostSpec(self.l0, self.l1)

    @property
    def prior(self) -> PriorSpec:
        return PriorSpec(self.p1)

    def pipeline_spec(self, kind: str) -> PipelineSpec:
        return PipelineSpec(kind, n_components=self.pca_k, lambda_points=self.lambda_points,
                            lambda_folds=self.lambda_folds, cost=self.cost, prior=self.prior)


def _parse_value(name: str, raw):
    kinds = {f.name: f.type for f in fields(RunConfig)}
    if name not in kinds:
        raise ValueError(f"unknown config key {name!r}")
    t = kinds[name]
    if isinstance(raw, str):
        raw = raw.strip()
    if name == "pipelines":
        items = raw.split(",") if isinstance(raw, str) else list(raw)
        items = tuple(s.strip() for s in items if s.strip())
        for s in items:
            if s not in PIPELINE_KINDS:
                raise ValueError(f"unknown pipeline {s!r}")
        if len(set(items)) != len(items):
            raise ValueError(f"pipeline listed twice in {','.join(items)}")
        return items
    if name == "coef":
        items = raw.split(",") if isinstance(raw, str) else list(raw)
        return tuple(float(s) for s in items)
    if name == "stratify":
        return raw if isinstance(raw, bool) else raw.lower() in ("1", "true", "yes", "on")
    if "int" in t and "float" not in t:
        return int(raw)
    if t.startswith("float"):
        return float(raw)
    return raw if raw is None else str(raw)


def read_config(path) -> dict:
    out = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected key = value")
            key, value = (s.strip() for s in line.split("=", 1))
            key = key.replace("-", "_")
            out[key] = _parse_value(key, value)
    return out


def build_config(args: argparse.Namespace) -> RunConfig:
    cfg = RunConfig()
    if getattr(args, "config", None):
        cfg = replace(cfg, **read_config(args.config))
    overrides = {}
    for f in fields(RunConfig):
        v = getattr(args, f.name, None)
        if v is not None:
            overrides[f.name] = _parse_value(f.name, v)
    cfg = replace(cfg, **overrides)
    if cfg.cutoff not in ("tuned", "bayes"):
        raise ValueError("cutoff must be 'tuned' or 'bayes'")
    return cfg


def _fmt(v: float) -> str:
    return repr(float(v))


def _write_csv(path: Path, rows):
    with open(path, "w", newline="") as fh:
        csv.writer(fh, lineterminator="\n").writerows(rows)


def _load(cfg: RunConfig):
    if not cfg.input:
        raise StudyFormatError("--input is required")
    return load_study(cfg.input, cfg.label_column)


def _out(cfg: RunConfig) -> Path:
    p = Path(cfg.out)
    p.mkdir(parents=True, exist_ok=True)
    return p


# --------------------------------------------------------------------------


def cmd_screen(cfg: RunConfig) -> dict:
    from . import figures

    study = _load(cfg)
    out = _out(cfg)
    screening = screen_features(study)
    _write_csv(out / "screening.csv", screening.to_csv_rows())
    vdir = out / "violin"
    vdir.mkdir(exist_ok=True)
    summary = [("feature", "group", "n", "min", "q1", "median", "q3", "max", "bandwidth", "degenerate")]
    violins = {}
    for j, name in enumerate(study.feature_names):
        vd = violin_data(study.features[:, j], study.labels)
        violins[name] = vd
        rows = [("group", "x", "density")]
        for g, d in vd.items():
            summary.append((name, g, d.n, _fmt(d.minimum), *map(_fmt, d.quartiles), _fmt(d.maximum),
                            "" if d.bandwidth is None else _fmt(d.bandwidth), int(d.degenerate)))
            if not d.degenerate:
                rows.extend((g, _fmt(x), _fmt(y)) for x, y in zip(d.grid, d.density))
        _write_csv(vdir / f"{name}.csv", rows)
    _write_csv(out / "violin_summary.csv", summary)
    top = [r.feature for r in screening.top(cfg.top)]
    cols = [study.feature_names.index(n) for n in top]
    scatter = [tuple(top) + ("group",)]
    scatter.extend(tuple(_fmt(v) for v in study.features[i, cols]) + (int(study.labels[i]),)
                   for i in range(study.n))
    _write_csv(out / f"scatter_top{cfg.top}.csv", scatter)
    figures.violins(screening, violins, out / "violins.svg")
    figures.scatter_matrix(study.features[:, cols], study.labels, top, out / "scatter_matrix.svg")
    for r in screening.rows:
        print(f"{r.feature:12s} U={r.U:8.1f} p={r.p:.4g} ({r.method})")
    return {"screening": screening, "errors": []}


def _evaluate_one(args):
    study, spec, cfg = args
    return evaluate_pipeline(study, spec, cfg.cost, cfg.prior, k=cfg.folds, seed=cfg.seed,
                             cutoff_policy=cfg.cutoff, B=cfg.bootstrap, level=cfg.level,
                             stratify=cfg.stratify)


def run_evaluations(study, cfg: RunConfig, bootstrap: bool = True):
    """Evaluate every configured pipeline; returns (reports by name, errors)."""
    c = cfg if bootstrap else replace(cfg, bootstrap=0)
    jobs = [(study, c.pipeline_spec(k), c) for k in c.pipelines]
    reports, errors = {}, []
    if c.jobs > 1:
        with ProcessPoolExecutor(max_workers=c.jobs) as ex:
            futures = [ex.submit(_evaluate_one, j) for j in jobs]
            results = []
            for f in futures:
                try:
                    results.append(f.result())
                except (FitError, ValueError) as exc:
                    results.append(exc)
    else:
        results = []
        for j in jobs:
            try:
                results.append(_evaluate_one(j))
            except (FitError, ValueError) as exc:
                results.append(exc)
    for kind, res in zip(c.pipelines, results):
        if isinstance(res, Exception):
            errors.append(f"{kind}: {res}")
        else:
            reports[kind] = res
    return reports, errors


def cmd_evaluate(cfg: RunConfig) -> dict:
    from . import figures

    study = _load(cfg)
    out = _out(cfg)
    ctx = ShiftContext.build(cfg.prior, cfg.cost, study=study)
    reports, errors = run_evaluations(study, cfg)
    ci_rows = [("model", "level", "c0_lo", "c0_hi", "c1_lo", "c1_hi", "risk_lo", "risk_hi",
                "normalized_lo", "normalized_hi")]
    summary = [("model", "misclassified_elective", "misclassified_emergent", "expected_cost",
                "risk", "cutoff", "bayes_cutoff", "auc", "brier")]
    summary_json = {"shift": ctx.to_dict(), "models": {}, "errors": errors}
    for name, rep in reports.items():
        (out / f"eval_{name}.json").write_text(rep.to_json() + "\n")
        curve = [("cutoff", "risk", "c0", "c1", "normalized_risk")]
        curve.extend(tuple(map(_fmt, row)) for row in rep.curve.curve_rows())
        _write_csv(out / f"risk_curve_{name}.csv", curve)
        roc_rows = [("threshold", "fpr", "tpr")]
        roc_rows.extend((_fmt(t), _fmt(a), _fmt(b)) for t, a, b in zip(rep.roc.thresholds, rep.roc.fpr, rep.roc.tpr))
        _write_csv(out / f"roc_{name}.csv", roc_rows)
        if rep.ci is not None:
            ci = rep.ci
            ci_rows.append((name, _fmt(ci.level), *map(_fmt, ci.c0 + ci.c1 + ci.risk + ci.normalized_risk)))
        summary.append((name, _fmt(rep.c0), _fmt(rep.c1), _fmt(rep.normalized_risk), _fmt(rep.risk),
                        _fmt(rep.cutoff), _fmt(rep.bayes_cutoff), _fmt(rep.auc), _fmt(rep.brier)))
        summary_json["models"][name] = {
            "misclassified_elective": rep.c0, "misclassified_emergent": rep.c1,
            "expected_cost": rep.normalized_risk, "risk": rep.risk, "cutoff": rep.cutoff,
            "auc": rep.auc, "brier": rep.brier, "brier_sum": rep.brier_sum,
        }
    _write_csv(out / "ci.csv", ci_rows)
    _write_csv(out / "summary.csv", summary)
    (out / "summary.json").write_text(json.dumps(summary_json, indent=2, sort_keys=True) + "\n")
    reps = list(reports.values())
    if reps:
        figures.risk_curves(reps, out / "risk_curves.svg")
        figures.intervals(reps, out / "ci.svg")
        figures.roc(reps, out / "roc.svg")
    print(f"Bayes reference cutoff: {ctx.cutoff:.4f} (a = {ctx.a:.6f})")
    print(f"{'Model':8s} {'Miscl. elective':>16s} {'Miscl. emergent':>16s} {'Expected cost':>14s} {'cutoff':>8s}")
    for name, rep in reports.items():
        print(f"{name:8s} {rep.c0:16.3f} {rep.c1:16.3f} {rep.normalized_risk:14.3f} {rep.cutoff:8.3f}")
    for e in errors:
        print(f"error: {e}", file=sys.stderr)
    return {"reports": reports, "errors": errors, "shift": ctx}


def overlap_from_predictions(predictions: dict, labels, kmeans_assignment=None):
    preds = dict(predictions)
    if kmeans_assignment is not None:
        preds["2-means"] = kmeans_assignment
    return misclassification_matrix(preds, labels)


def cmd_overlap(cfg: RunConfig) -> dict:
    from . import figures

    study = _load(cfg)
    if len(cfg.pipelines) < 2:
        raise ValueError("overlap needs at least two pipelines")
    out = _out(cfg)
    reports, errors = run_evaluations(study, cfg, bootstrap=False)
    z, _ = standardize(study)
    km = kmeans2(z.features, seed=cfg.seed, restarts=10, labels=study.labels)
    preds = {name: rep.predictions for name, rep in reports.items()}
    ov = overlap_from_predictions(preds, study.labels, km.assignment)
    rows = [("observation", "group") + ov.names + ("intensity",)]
    for r, i in enumerate(ov.order):
        rows.append((int(i), int(ov.labels[r]), *map(int, ov.matrix[r]), int(ov.intensity[r])))
    _write_csv(out / "overlap.csv", rows)
    figures.overlap_strip(ov, study.n0, out / "overlap.svg")
    for e in errors:
        print(f"error: {e}", file=sys.stderr)
    return {"overlap": ov, "errors": errors, "kmeans": km}


def cmd_synth(cfg: RunConfig) -> dict:
    out = _out(cfg)
    spec = PopulationSpec(cfg.intercept, cfg.coef, cfg.seed)
    pop = generate_population(spec, cfg.n_pop)
    study = draw_case_control(pop, cfg.n0, cfg.n1, cfg.seed)
    write_study(study, out / "study.csv", cfg.label_column)
    summary = {
        "N": pop.N, "p": spec.p, "intercept": spec.intercept, "coefficients": list(spec.coefficients),
        "seed": spec.seed, "class1_count": int(pop.labels.sum()), "class1_fraction": pop.class1_fraction,
        "p1_mean_posterior": pop.p1, "n0": cfg.n0, "n1": cfg.n1,
    }
    (out / "population_summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    check = shift_check(spec, cfg.n_pop, cfg.n0, cfg.n1, cfg.n_test, cfg.seed)
    (out / "oracle_report.json").write_text(json.dumps(check.to_dict(), indent=2, sort_keys=True) + "\n")
    print(f"population p1 = {pop.p1:.4f}; shift factor a = {check.a:.4f}")
    print(f"MAE corrected   = {check.mae_corrected:.4f} (bias {check.bias_corrected:+.4f})")
    print(f"MAE uncorrected = {check.mae_uncorrected:.4f} (bias {check.bias_uncorrected:+.4f})")
    return {"study": study, "check": check, "errors": []}


def importance_panels(study, cfg: RunConfig):
    """Rows ``(feature, magnitude, direction)`` per panel, plus errors."""
    screening = screen_features(study)
    mw = sorted(((r.feature, -math.log10(max(r.p, 1e-300)), "", r.index) for r in screening.rows),
                key=lambda t: (-t[1], t[3]))
    panels = [("MannWhitney", [t[:3] for t in mw])]
    errors = []
    for kind in ("SparseL", "AIC", "BIC"):
        try:
            fitted = fit_pipeline(study, cfg.pipeline_spec(kind).with_seed(cfg.seed))
        except (FitError, ValueError) as exc:
            errors.append(f"{kind}: {exc}")
            panels.append((kind, []))
            continue
        panels.append((kind, [(r.feature, r.magnitude, r.direction) for r in standardized_importance(fitted.model)]))
    return panels, errors


def cmd_importance(cfg: RunConfig) -> dict:
    from . import figures

    study = _load(cfg)
    out = _out(cfg)
    panels, errors = importance_panels(study, cfg)
    for title, rows in panels:
        data = [("feature", "importance", "direction")]
        data.extend((f, _fmt(m), d) for f, m, d in rows)
        if not rows and title != "MannWhitney":
            data.append(("(intercept-only)", "0.0", ""))
        _write_csv(out / f"importance_{title}.csv", data)
    figures.importance_panels(panels, out / "importance.svg")
    for e in errors:
        print(f"error: {e}", file=sys.stderr)
    return {"panels": panels, "errors": errors}


COMMANDS = {
    "screen": cmd_screen,
    "evaluate": cmd_evaluate,
    "overlap": cmd_overlap,
    "synth": cmd_synth,
    "importance": cmd_importance,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="aaarisk", description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--input", help="comma-separated study file with a header row")
    common.add_argument("--label-column", dest="label_column")
    common.add_argument("--config", help="key = value settings file")
    common.add_argument("--seed", type=int)
    common.add_argument("--folds", type=int)
    common.add_argument("--l0", type=float)
    common.add_argument("--l1", type=float)
    common.add_argument("--p1", type=float)
    common.add_argument("--pipelines", help="comma-separated subset of " + ",".join(PIPELINE_KINDS))
    common.add_argument("--cutoff", choices=("tuned", "bayes"))
    common.add_argument("--bootstrap", type=int, help="bootstrap replicates (0 disables)")
    common.add_argument("--level", type=float)
    common.add_argument("--stratify", action="store_const", const=True, default=None)
    common.add_argument("--lambda-points", dest="lambda_points", type=int)
    common.add_argument("--lambda-folds", dest="lambda_folds", type=int)
    common.add_argument("--pca-k", dest="pca_k", type=int)
    common.add_argument("--jobs", type=int)
    common.add_argument("--out", help="output directory")
    for name in COMMANDS:
        p = sub.add_parser(name, parents=[common])
        if name == "screen":
            p.add_argument("--top", type=int, help="features in the scatter export (default 16)")
        if name == "synth":
            p.add_argument("--n-pop", dest="n_pop", type=int)
            p.add_argument("--n0", type=int)
            p.add_argument("--n1", type=int)
            p.add_argument("--intercept", type=float)
            p.add_argument("--coef", help="comma-separated coefficients")
            p.add_argument("--n-test", dest="n_test", type=int)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = build_config(args)
        result = COMMANDS[args.command](cfg)
    except (StudyFormatError, FitError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 1 if result.get("errors") else 0


if __name__ == "__main__":
    sys.exit(main())
