"""Per-cell agreement reports and repetition-rate summaries built from run outputs."""

from __future__ import annotations

import csv
import io
import json
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from ..corpus import Context, GenerationRecord, load_records, write_records
from ..evaluation import GENERATION, PROBABILITY, EvalOutcome
from ..metrics import AgreementReport, FitError, agreement, beta_fit, disagreement_series, mean_std, repetition_rate, sigma
from ..pronouns import BASES

# datasets whose instances are open contexts rather than templates
CONTEXT_DATASETS = frozenset({"tango"})


def load_outcomes(path: str | Path) -> list[EvalOutcome]:
    with open(path, encoding="utf-8") as f:
        return [EvalOutcome.from_dict(json.loads(line)) for line in f if line.strip()]


def sigma_summary(values: Sequence[float]) -> dict | None:
    if not values:
        return None
    dist: dict[str, int] = defaultdict(int)
    for v in values:
        dist[f"{v:.4f}"] += 1
    m, s = mean_std(values)
    return {"n": len(values), "mean": m, "std": s, "distribution": dict(sorted(dist.items()))}


@dataclass
class CellReport:
    dataset: str
    model: str
    pronoun: str
    setting: str
    n_instances: int
    sigma_gen: dict | None
    sigma_prob: dict | None
    agreement: AgreementReport | None
    beta: dict | None
    failure_rate: float | None
    rr: dict | None
    notes: list = field(default_factory=list)

    @property
    def key(self) -> tuple[str, str, str, str]:
        return (self.dataset, self.model, self.pronoun, self.setting)

    def to_dict(self) -> dict:
        return {
            "dataset": self.dataset,
            "model": self.model,
            "pronoun": self.pronoun,
            "setting": self.setting,
            "n_instances": self.n_instances,
            "sigma_gen": self.sigma_gen,
            "sigma_prob": self.sigma_prob,
            "agreement": self.agreement.to_dict() if self.agreement else None,
            "beta": self.beta,
            "failure_rate": self.failure_rate,
            "rr": self.rr,
            "notes": list(self.notes),
        }

    def row(self) -> dict:
        a = self.agreement
        return {
            "dataset": self.dataset, "model": self.model, "pronoun": self.pronoun, "setting": self.setting,
            "n_instances": self.n_instances,
            "sigma_gen_mean": self.sigma_gen["mean"] if self.sigma_gen else None,
            "p_o": a.p_o if a else None,
            "mcc": a.mcc if a else None,
            "mcc_lo": a.mcc_ci[0] if a and a.mcc_ci else None,
            "mcc_hi": a.mcc_ci[1] if a and a.mcc_ci else None,
            "kappa": a.kappa if a else None,
            "kappa_lo": a.kappa_ci[0] if a and a.kappa_ci else None,
            "kappa_hi": a.kappa_ci[1] if a and a.kappa_ci else None,
            "undefined_reason": a.undefined_reason if a else None,
            "beta_alpha": self.beta.get("alpha") if self.beta else None,
            "beta_beta": self.beta.get("beta") if self.beta else None,
            "beta_undefined": self.beta.get("undefined_reason") if self.beta else None,
            "failure_rate": self.failure_rate,
            "rr_mean": self.rr["mean"] if self.rr else None,
            "rr_std": self.rr["std"] if self.rr else None,
        }


CSV_COLUMNS = tuple(CellReport("", "", "", "", 0, None, None, None, None, None, None).row())


def _first(samples: dict[int, int]) -> int:
    return samples[min(samples)]


def _cell(
    dataset: str, model: str, pronoun: str, setting: str,
    prob: dict[str, dict[int, int]], gen: dict[str, dict[int, int]],
    failure: float | None, rr: list[float],
) -> CellReport:
    """One cell from per-instance outcome maps {instance: {sample_index: m}}.

    Template datasets carry a single probability outcome per instance (index -1);
    context datasets carry one derived probability outcome per converted sample.
    """
    notes = []
    context_style = dataset in CONTEXT_DATASETS
    paired = sorted(set(prob) & set(gen))
    if set(prob) ^ set(gen):
        notes.append(f"{len(set(prob) ^ set(gen))} instance(s) lack one of the two methods")
    sig_gen = sigma_summary([sigma(list(gen[i].values())) for i in sorted(gen)])
    sig_prob = sigma_summary([sigma(list(prob[i].values())) for i in sorted(prob)]) if context_style else None
    agree = None
    beta = None
    if paired:
        agree = agreement([_first(prob[i]) for i in paired], [_first(gen[i]) for i in paired])
        pairing = "tango" if context_style else "misgendered_ruff"
        p_in = {i: (list(prob[i].values()) if context_style else _first(prob[i])) for i in paired}
        d = disagreement_series(p_in, {i: list(gen[i].values()) for i in paired}, pairing)
        try:
            beta = beta_fit(d).to_dict()
        except FitError as exc:
            beta = {"alpha": None, "beta": None, "n": len(d), "undefined_reason": str(exc)}
    else:
        notes.append("no instance has both probability and generation outcomes")
    return CellReport(
        dataset, model, pronoun, setting, len(gen), sig_gen, sig_prob, agree, beta,
        failure if context_style else None,
        ({"mean": mean_std(rr)[0], "std": mean_std(rr)[1], "n": len(rr)} if rr else None),
        notes,
    )


def _by_instance(outcomes: Iterable[EvalOutcome]) -> dict[str, dict[int, int]]:
    out: dict[str, dict[int, int]] = defaultdict(dict)
    for o in outcomes:
        out[o.instance_id][-1 if o.sample_index is None else o.sample_index] = o.m
    return out


def cmd_agree(
    outcomes: Sequence[EvalOutcome],
    conversions: Sequence[dict] = (),
    generations: Sequence[GenerationRecord] = (),
) -> tuple[list[CellReport], list[str]]:
    """Build one report per (dataset, model, pronoun, generation setting).

    Returns the reports and notes about omitted cells.
    """
    groups: dict[tuple, dict[str, list[EvalOutcome]]] = defaultdict(lambda: {"prob": [], "gen": []})
    # probability outcomes of templates belong to every generation setting of that template
    gen_settings: dict[tuple, set[str]] = defaultdict(set)
    for o in outcomes:
        if o.method == GENERATION:
            gen_settings[(o.dataset, o.model_id, o.gold_base.value)].add(o.setting)
    for o in outcomes:
        base = (o.dataset, o.model_id, o.gold_base.value)
        if o.method == GENERATION:
            groups[base + (o.setting,)]["gen"].append(o)
        elif o.method == PROBABILITY:
            for s in gen_settings.get(base, ()):
                groups[base + (s,)]["prob"].append(o)

    conv_by_instance: dict[str, list[str]] = defaultdict(list)
    for c in conversions:
        conv_by_instance[c["instance_id"]].append(c["status"])
    rr_by_context: dict[str, list[float]] = defaultdict(list)
    for g in generations:
        r = repetition_rate(g.text)
        if r is not None:
            rr_by_context[g.context_id].append(r)

    reports, notes = [], []
    datasets_models = sorted({k[:2] for k in groups})
    for dataset, model in datasets_models:
        settings = sorted({k[3] for k in groups if k[:2] == (dataset, model)})
        for setting in settings:
            for b in BASES:
                key = (dataset, model, b.value, setting)
                if key not in groups or not groups[key]["gen"]:
                    notes.append(f"cell {dataset}/{model}/{b.value}/{setting} omitted: no instances")
                    continue
                prob = _by_instance(groups[key]["prob"])
                gen = _by_instance(groups[key]["gen"])
                statuses = [s for i in gen for s in conv_by_instance.get(i, [])]
                failure = sum(s == "no_pronoun" for s in statuses) / len(statuses) if statuses else None
                ctx_ids = {o.context_id for o in groups[key]["gen"]}
                rr = [r for c in sorted(ctx_ids) for r in rr_by_context.get(c, [])]
                reports.append(_cell(dataset, model, b.value, setting, prob, gen, failure, rr))
    return reports, notes


def _csv(rows: list[dict], columns: Sequence[str]) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=list(columns), lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: "" if r.get(k) is None else r[k] for k in columns})
    return buf.getvalue()


def _read_jsonl(path: Path) -> list[dict]:
    if not path.exists():
        return []
    with open(path, encoding="utf-8") as f:
        return [json.loads(line) for line in f if line.strip()]


def agree_from_run(run_dir: str | Path, out_dir: str | Path | None = None) -> tuple[list[CellReport], list[str]]:
    """Read a run directory, build the cell reports, write report.json and report.csv."""
    run_dir = Path(run_dir)
    out_dir = Path(out_dir) if out_dir else run_dir
    outcomes = load_outcomes(run_dir / "outcomes.jsonl")
    gens_path = run_dir / "generations.jsonl"
    gens = load_records(gens_path, "generation_jsonl") if gens_path.exists() else []
    reports, notes = cmd_agree(outcomes, _read_jsonl(run_dir / "conversions.jsonl"), gens)
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "report.json", "w", encoding="utf-8", newline="\n") as f:
        json.dump({"cells": [r.to_dict() for r in reports], "notes": notes}, f, indent=1)
        f.write("\n")
    (out_dir / "report.csv").write_text(_csv([r.row() for r in reports], CSV_COLUMNS), encoding="utf-8")
    return reports, notes


# -------------------------------------------------------------- repetition


def cmd_rr(
    generations: Sequence[GenerationRecord], contexts: Sequence[Context] = ()
) -> tuple[list[dict], list[dict]]:
    """Per-generation repetition rate and mean/std per (model, pronoun)."""
    gold = {c.id: c.gold_base.value for c in contexts}
    rows, groups = [], defaultdict(list)
    for g in generations:
        rr = repetition_rate(g.text)
        pronoun = gold.get(g.context_id, "")
        rows.append({
            "context_id": g.context_id, "sample_index": g.sample_index,
            "model_id": g.model_id, "pronoun": pronoun, "rr": rr,
        })
        if rr is not None:
            groups[(g.model_id, pronoun)].append(rr)
    aggregates = []
    for (model, pronoun), vals in sorted(groups.items()):
        m, s = mean_std(vals)
        aggregates.append({"model_id": model, "pronoun": pronoun, "n": len(vals), "mean": m, "std": s})
    return rows, aggregates


def rr_to_files(generations_path, contexts_path, out_dir) -> tuple[list[dict], list[dict]]:
    gens = load_records(generations_path, "generation_jsonl")
    ctxs = load_records(contexts_path, "context_jsonl") if contexts_path and Path(contexts_path).exists() else []
    rows, aggregates = cmd_rr(gens, ctxs)
    out_dir = Path(out_dir)
    write_records(out_dir / "rr.jsonl", rows)
    (out_dir / "rr_summary.csv").write_text(
        _csv(aggregates, ("model_id", "pronoun", "n", "mean", "std")), encoding="utf-8")
    return rows, aggregates
