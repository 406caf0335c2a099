"""Probability-based and generation-based correct-gendering evaluators."""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

from .corpus import Context, DecodeParams, GenerationRecord, Template
from .model_client import Model, perplexity
from .pronouns import BasePronoun, SpellingProfile, forms_for_case, get_profile, iter_pronouns
from .text import tokenize
from .transform import (
    DEFAULT_TABLE, ConjugationTable, ConversionOutcome, prob_to_gen_post, prob_to_gen_pre,
    gen_to_prob, render_mask,
)

log = logging.getLogger(__name__)

PROBABILITY = "probability"
GENERATION = "generation"


@dataclass
class EvalOutcome:
    instance_id: str
    method: str
    setting: str
    m: int
    gold_base: BasePronoun
    predicted_base: BasePronoun | None = None
    sample_index: int | None = None
    candidate_perplexities: dict | None = None
    dataset: str = ""
    model_id: str = ""
    context_id: str = ""
    diagnostics: list = field(default_factory=list)

    def __post_init__(self):
        expected = int(self.predicted_base is None or self.predicted_base == self.gold_base)
        if self.m != expected:
            raise ValueError(f"m={self.m} inconsistent with predicted={self.predicted_base}, gold={self.gold_base}")

    @property
    def key(self) -> tuple:
        return (self.instance_id, self.method, self.setting, -1 if self.sample_index is None else self.sample_index)

    def to_dict(self) -> dict:
        return {
            "instance_id": self.instance_id,
            "method": self.method,
            "setting": self.setting,
            "sample_index": self.sample_index,
            "m": self.m,
            "predicted_base": self.predicted_base.value if self.predicted_base else None,
            "gold_base": self.gold_base.value,
            "dataset": self.dataset,
            "model_id": self.model_id,
            "context_id": self.context_id,
            "candidate_perplexities": (
                {b.value: p for b, p in self.candidate_perplexities.items()}
                if self.candidate_perplexities is not None else None
            ),
            "diagnostics": list(self.diagnostics),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "EvalOutcome":
        pred = data.get("predicted_base")
        cands = data.get("candidate_perplexities")
        return cls(
            instance_id=data["instance_id"],
            method=data["method"],
            setting=data["setting"],
            m=int(data["m"]),
            gold_base=BasePronoun(data["gold_base"]),
            predicted_base=BasePronoun(pred) if pred else None,
            sample_index=data.get("sample_index"),
            candidate_perplexities={BasePronoun(k): v for k, v in cands.items()} if cands else None,
            dataset=data.get("dataset", ""),
            model_id=data.get("model_id", ""),
            context_id=data.get("context_id", ""),
            diagnostics=list(data.get("diagnostics", [])),
        )

    def row(self) -> dict:
        """The flat outcome-table columns."""
        d = self.to_dict()
        return {k: d[k] for k in (
            "instance_id", "method", "setting", "sample_index", "m", "predicted_base",
            "gold_base", "dataset", "model_id", "context_id",
        )}


def _argmin(perps: dict[BasePronoun, float], surfaces: dict[BasePronoun, str]) -> tuple[BasePronoun, bool]:
    best = min(perps.values())
    tied = [b for b, p in perps.items() if math.isclose(p, best, rel_tol=1e-12, abs_tol=0.0) or p == best]
    winner = min(tied, key=lambda b: surfaces[b])
    return winner, len(tied) > 1


def eval_probability(
    template: Template,
    model: Model,
    profile: SpellingProfile | str | None = None,
    instance_id: str | None = None,
    sample_index: int | None = None,
    setting: str = "native",
) -> EvalOutcome:
    profile = get_profile(profile or template.profile)
    perps = {}
    surfaces = {}
    for form in forms_for_case(profile, template.mask_case):
        perps[form.base] = perplexity(model.score(render_mask(template, form)))
        surfaces[form.base] = form.surface
    predicted, tie = _argmin(perps, surfaces)
    diagnostics = []
    if tie:
        diagnostics.append(f"argmin tie broken lexicographically -> {surfaces[predicted]!r}")
    return EvalOutcome(
        instance_id=instance_id or template.id,
        method=PROBABILITY,
        setting=setting,
        m=int(predicted == template.gold_base),
        gold_base=template.gold_base,
        predicted_base=predicted,
        sample_index=sample_index,
        candidate_perplexities=perps,
        dataset=template.dataset,
        model_id=getattr(model, "model_id", ""),
        context_id=template.metadata.get("source_context", ""),
        diagnostics=diagnostics,
    )


def predicted_base(text: str, profile: SpellingProfile) -> BasePronoun | None:
    hit = next(iter_pronouns(tokenize(text), profile, skip_declarations=True), None)
    return hit[0].base if hit else None


def eval_generation(
    context: Context,
    generation: GenerationRecord,
    profile: SpellingProfile | str | None = None,
    instance_id: str | None = None,
) -> EvalOutcome:
    if generation.context_id != context.id:
        raise ValueError(f"generation belongs to {generation.context_id!r}, not {context.id!r}")
    profile = get_profile(profile or context.profile)
    pred = predicted_base(generation.text, profile)
    return EvalOutcome(
        instance_id=instance_id or context.metadata.get("source_template", context.id),
        method=GENERATION,
        setting=context.setting,
        m=int(pred is None or pred == context.gold_base),
        gold_base=context.gold_base,
        predicted_base=pred,
        sample_index=generation.sample_index,
        dataset=context.dataset,
        model_id=generation.model_id,
        context_id=context.id,
        diagnostics=[] if pred is not None else ["no pronoun generated"],
    )


@dataclass
class InstanceResult:
    instance_id: str
    outcomes: list[EvalOutcome] = field(default_factory=list)
    contexts: list[Context] = field(default_factory=list)
    generations: list[GenerationRecord] = field(default_factory=list)
    conversions: list[dict] = field(default_factory=list)
    error: Exception | None = None


@dataclass
class EvalRun:
    outcomes: list[EvalOutcome] = field(default_factory=list)
    contexts: list[Context] = field(default_factory=list)
    generations: list[GenerationRecord] = field(default_factory=list)
    conversions: list[dict] = field(default_factory=list)
    errors: list[dict] = field(default_factory=list)
    excluded: list[dict] = field(default_factory=list)
    attempted: int = 0

    def failure_rate(self, instance_id: str | None = None) -> float | None:
        rows = [c for c in self.conversions if instance_id is None or c["instance_id"] == instance_id]
        if not rows:
            return None
        return sum(c["status"] == "no_pronoun" for c in rows) / len(rows)


def _conversion_row(instance_id: str, outcome: ConversionOutcome) -> dict:
    return {
        "instance_id": instance_id,
        "context_id": outcome.source[0] if outcome.source else "",
        "sample_index": outcome.source[1] if outcome.source else None,
        "status": outcome.status,
        "diagnostics": list(outcome.diagnostics),
    }


SETTINGS = ("prob", "gen_pre", "gen_post")


def _run_template(
    template: Template, model: Model, params: DecodeParams, settings: frozenset = frozenset(SETTINGS)
) -> InstanceResult:
    res = InstanceResult(template.id)
    if "prob" in settings:
        res.outcomes.append(eval_probability(template, model))
    for name, make in (("gen_pre", prob_to_gen_pre), ("gen_post", prob_to_gen_post)):
        if name not in settings:
            continue
        ctx = make(template)
        res.contexts.append(ctx)
        for gen in model.generate(ctx.text, params, ctx.id):
            res.generations.append(gen)
            res.outcomes.append(eval_generation(ctx, gen, instance_id=template.id))
    return res


def _run_context(context: Context, model: Model, params: DecodeParams, table: ConjugationTable) -> InstanceResult:
    res = InstanceResult(context.id, contexts=[context])
    for gen in model.generate(context.text, params, context.id):
        res.generations.append(gen)
        res.outcomes.append(eval_generation(context, gen, instance_id=context.id))
        conv = gen_to_prob(context, gen, table=table)
        res.conversions.append(_conversion_row(context.id, conv))
        if conv.product is not None:
            out = eval_probability(conv.product, model, instance_id=context.id, sample_index=gen.sample_index)
            out.dataset = context.dataset
            out.diagnostics = list(conv.diagnostics) + out.diagnostics
            res.outcomes.append(out)
    return res


def run_parallel_eval(
    dataset: Sequence[Template | Context],
    model: Model,
    params: DecodeParams,
    workers: int = 1,
    table: ConjugationTable = DEFAULT_TABLE,
    settings: Sequence[str] = SETTINGS,
) -> EvalRun:
    """Evaluate every instance both ways; outcome order is independent of ``workers``.

    ``settings`` selects which template-side evaluations run. Context instances
    always need sampling, so they ignore it.
    """
    settings = frozenset(settings)
    if not settings or settings - set(SETTINGS):
        raise ValueError(f"settings must be a non-empty subset of {SETTINGS}, got {sorted(settings)}")
    run = EvalRun()
    admitted = []
    for rec in dataset:
        if rec.has_distractor:
            run.excluded.append({"instance_id": rec.id, "reason": "has_distractor"})
        else:
            admitted.append(rec)

    def one(rec) -> InstanceResult:
        try:
            if isinstance(rec, Template):
                return _run_template(rec, model, params, settings)
            return _run_context(rec, model, params, table)
        except Exception as exc:  # recorded per instance; the batch continues
            log.warning("instance %s failed: %s", rec.id, exc)
            return InstanceResult(rec.id, error=exc)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(one, admitted))
    else:
        results = [one(rec) for rec in admitted]

    run.attempted = len(results)
    for res in results:
        if res.error is not None:
            run.errors.append({
                "instance_id": res.instance_id,
                "error": type(res.error).__name__,
                "message": str(res.error),
            })
            continue
        run.outcomes += res.outcomes
        run.contexts += res.contexts
        run.generations += res.generations
        run.conversions += res.conversions
    return run
