"""Closed-form disagreement probabilities between the two evaluation methods.

Exact only for whole-word tokens and unfiltered single-beam sampling, so
everything here requires a backend exposing full conditionals (the mock).
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .corpus import Context, GenerationRecord, Template
from .evaluation import predicted_base
from .model_client import CapabilityError, DecodeParams, derive_seed, filter_distribution, mock_tokens
from .pronouns import BasePronoun, PronounForm, SpellingProfile, forms_for_case, get_profile, iter_pronouns
from .text import MASK, tokenize
from .transform import prob_to_gen_post, tag_case, truncate_generation

MIN_TRIALS = 10_000
CHUNK = 10_000


class DegenerateDistributionError(ValueError):
    pass


class NotApplicableError(ValueError):
    pass


class OracleUndefinedError(ValueError):
    pass


@dataclass
class DivergenceResult:
    setting: str
    delta: float
    delta_star: float
    p_star: BasePronoun
    candidate_mass: dict
    diagnostics: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "setting": self.setting,
            "delta": self.delta,
            "delta_star": self.delta_star,
            "p_star": self.p_star.value,
            "candidate_mass": {b.value: m for b, m in self.candidate_mass.items()},
            "diagnostics": list(self.diagnostics),
        }


@dataclass(frozen=True)
class MonteCarloEstimate:
    conditioned: float | None
    unconditioned: float
    qualifying: int
    trials: int


def _require_conditionals(model) -> None:
    if not hasattr(model, "conditional_logprob"):
        raise CapabilityError("divergence analysis needs a backend with exact conditionals (mock)")


@dataclass(frozen=True)
class _Site:
    """A mask site: the conditioning prefix, candidate forms, and what follows."""

    prefix: list[str]
    forms: list[PronounForm]
    suffix: list[str]


def _template_site(template: Template, profile: SpellingProfile) -> _Site:
    before, after = template.text.split(MASK)
    return _Site(mock_tokens(before), forms_for_case(profile, template.mask_case), mock_tokens(after))


def candidate_masses(model, prefix: list[str], forms: list[PronounForm]) -> dict[BasePronoun, float]:
    _require_conditionals(model)
    vec = model._vector(prefix)
    return {f.base: float(vec[model.index[f.surface]]) if f.surface in model.index else 0.0 for f in forms}


def _p_star(model, site: _Site) -> tuple[BasePronoun, bool]:
    _require_conditionals(model)
    scores = {}
    for form in site.forms:
        head = model.conditional_logprob(site.prefix, [form.surface])
        tail = model.conditional_logprob(site.prefix + [form.surface], site.suffix) if head > -math.inf else -math.inf
        scores[form] = head + tail
    best = max(scores.values())
    if best == -math.inf:
        raise DegenerateDistributionError("every candidate has zero probability")
    tied = [f for f, s in scores.items() if s == best or math.isclose(s, best, rel_tol=1e-12)]
    winner = min(tied, key=lambda f: f.surface)
    return winner.base, len(tied) > 1


def p_star(template: Template, model, profile: SpellingProfile | str | None = None) -> BasePronoun:
    """Candidate maximizing prefix-conditional times suffix likelihood."""
    profile = get_profile(profile or template.profile)
    return _p_star(model, _template_site(template, profile))[0]


def delta_from_masses(masses: dict, star) -> tuple[float, float]:
    """(delta, delta*) from unnormalized candidate masses and the chosen candidate."""
    total = math.fsum(masses.values())
    if total <= 0:
        raise DegenerateDistributionError("candidate pronouns carry zero total mass")
    return 1 - masses[star] / total, 1 - max(masses.values()) / total


def _result(setting: str, masses: dict, star: BasePronoun, tie: bool) -> DivergenceResult:
    delta, delta_star = delta_from_masses(masses, star)
    diagnostics = ["p* tie broken lexicographically"] if tie else []
    return DivergenceResult(setting, delta, delta_star, star, masses, diagnostics)


def delta_pre(template: Template, model, profile: SpellingProfile | str | None = None) -> DivergenceResult:
    profile = get_profile(profile or template.profile)
    site = _template_site(template, profile)
    star, tie = _p_star(model, site)
    return _result("pre_mask", candidate_masses(model, site.prefix, site.forms), star, tie)


def _post_prefix(template: Template, model) -> list[str]:
    toks = mock_tokens(prob_to_gen_post(template).text)
    missing = [t for t in toks if t not in model.index]
    if missing and model.spec.unk is None:
        raise DegenerateDistributionError(f"filled template has tokens outside the vocabulary: {missing}")
    return toks


def delta_post(template: Template, model, profile: SpellingProfile | str | None = None) -> DivergenceResult:
    profile = get_profile(profile or template.profile)
    site = _template_site(template, profile)
    star, tie = _p_star(model, site)
    masses = candidate_masses(model, _post_prefix(template, model), site.forms)
    return _result("post_mask", masses, star, tie)


def _generation_site(context: Context, generation: GenerationRecord, profile: SpellingProfile) -> _Site:
    tokens = tokenize(generation.text)
    hit = next(iter_pronouns(tokens, profile, skip_declarations=True), None)
    if hit is None:
        raise NotApplicableError("generation contains no pronoun, so there is no mask site")
    form, index = hit
    case = tag_case(tokens, index, form, profile)
    kept, _, _ = truncate_generation(tokens, index, profile)
    prefix = mock_tokens(context.text) + [t.lower for t in tokens[:index]]
    suffix = [t.lower for t in kept[index + 1:]]
    return _Site(prefix, forms_for_case(profile, case), suffix)


def delta_gen_to_prob(
    context: Context, generation: GenerationRecord, model, profile: SpellingProfile | str | None = None
) -> DivergenceResult:
    profile = get_profile(profile or context.profile)
    site = _generation_site(context, generation, profile)
    star, tie = _p_star(model, site)
    return _result("gen_to_prob", candidate_masses(model, site.prefix, site.forms), star, tie)


# ---------------------------------------------------------------- oracle


def _count_chunk(model, prefix, surfaces, star_surfaces, size, seed) -> tuple[int, int]:
    rng = np.random.default_rng(seed)
    vec = filter_distribution(model._vector(prefix), top_k=0, top_p=1.0)
    draws = rng.choice(len(vec), size=size, p=vec)
    cand_ids = np.array([model.index[s] for s in surfaces if s in model.index], dtype=int)
    star_ids = np.array([model.index[s] for s in star_surfaces if s in model.index], dtype=int)
    qualifying = int(np.isin(draws, cand_ids).sum())
    agree = int(np.isin(draws, star_ids).sum())
    return qualifying, qualifying - agree


def monte_carlo_estimate(
    model, prefix: list[str], forms: list[PronounForm], star: BasePronoun,
    trials: int, seed: int = 0, workers: int = 1,
) -> MonteCarloEstimate:
    """Sample the token at the mask position without filtering; count disagreements.

    Trials are split into fixed-size chunks with their own derived seeds, so the
    estimate does not depend on ``workers``.
    """
    _require_conditionals(model)
    if trials < MIN_TRIALS:
        raise ValueError(f"need at least {MIN_TRIALS} trials, got {trials}")
    surfaces = [f.surface for f in forms]
    star_surfaces = [f.surface for f in forms if f.base == star]
    sizes = [CHUNK] * (trials // CHUNK) + ([trials % CHUNK] if trials % CHUNK else [])
    key = " ".join(prefix)
    jobs = [(size, derive_seed(seed, key, i)) for i, size in enumerate(sizes)]

    def run(job):
        return _count_chunk(model, prefix, surfaces, star_surfaces, *job)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            counts = list(pool.map(run, jobs))
    else:
        counts = [run(j) for j in jobs]
    qualifying = sum(q for q, _ in counts)
    disagree = sum(d for _, d in counts)
    conditioned = disagree / qualifying if qualifying else None
    return MonteCarloEstimate(conditioned, disagree / trials, qualifying, trials)


def _site_for(template: Template, model, profile, setting: str) -> tuple[_Site, list[str]]:
    site = _template_site(template, profile)
    if setting == "pre_mask":
        return site, site.prefix
    if setting == "post_mask":
        return site, _post_prefix(template, model)
    raise ValueError(f"unknown setting {setting!r}")


def monte_carlo_disagreement(
    template: Template, model, trials: int, setting: str = "pre_mask",
    seed: int = 0, workers: int = 1, profile: SpellingProfile | str | None = None,
) -> float:
    """Empirical disagreement rate among trials whose mask-position token is a candidate."""
    profile = get_profile(profile or template.profile)
    site, prefix = _site_for(template, model, profile, setting)
    star, _ = _p_star(model, site)
    est = monte_carlo_estimate(model, prefix, site.forms, star, trials, seed, workers)
    if est.conditioned is None:
        raise OracleUndefinedError("no trial placed a candidate pronoun at the mask position")
    return est.conditioned


def end_to_end_disagreement(
    template: Template, model, trials: int, setting: str = "pre_mask",
    max_tokens: int = 10, seed: int = 0, profile: SpellingProfile | str | None = None,
) -> tuple[float | None, int]:
    """Disagreement under the first-pronoun heuristic over whole sampled completions.

    Returns (rate among completions with a pronoun, number of such completions).
    """
    profile = get_profile(profile or template.profile)
    star = p_star(template, model, profile)
    prompt = template.text.split(MASK)[0].rstrip() if setting == "pre_mask" else prob_to_gen_post(template).text
    params = DecodeParams(top_k=0, top_p=1.0, max_tokens=max_tokens, num_samples=1, seed=seed)
    with_pronoun = disagree = 0
    for i in range(trials):
        text = model.sample_completion(prompt, params, derive_seed(seed, prompt, i))
        pred = predicted_base(text, profile)
        if pred is None:
            continue
        with_pronoun += 1
        disagree += pred != star
    return (disagree / with_pronoun if with_pronoun else None), with_pronoun


def divergence_report(template: Template, model, trials: int, seed: int = 0, workers: int = 1) -> list[dict]:
    """Closed-form and Monte-Carlo figures for both prompt settings of a template."""
    profile = get_profile(template.profile)
    out = []
    for setting, fn in (("pre_mask", delta_pre), ("post_mask", delta_post)):
        res = fn(template, model, profile)
        site, prefix = _site_for(template, model, profile, setting)
        est = monte_carlo_estimate(model, prefix, site.forms, res.p_star, trials, seed, workers)
        row = res.to_dict()
        row.update({
            "mc_estimate": est.conditioned,
            "mc_unconditioned": est.unconditioned,
            "mc_qualifying": est.qualifying,
            "trials": trials,
        })
        out.append(row)
    return out
