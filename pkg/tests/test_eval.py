import math

import pytest

from misgender_meta.corpus import Context, DecodeParams, GenerationRecord, Template
from misgender_meta.evaluation import (
    GENERATION, PROBABILITY, EvalOutcome, eval_generation, eval_probability, run_parallel_eval,
)
from misgender_meta.fixtures import misgendered_templates, ruff_templates, tango_contexts
from misgender_meta.model_client import MockModel, MockModelSpec
from misgender_meta.pronouns import DEP, NOM, BasePronoun

HE, SHE, THEY, XE = BasePronoun.HE, BasePronoun.SHE, BasePronoun.THEY, BasePronoun.XE


def uniform_model(words):
    return MockModel(MockModelSpec.from_dict({"vocabulary": sorted(set(words)), "order": 1}), "uniform")


def test_probability_picks_lowest_perplexity(builtin_mock, templates):
    out = eval_probability(templates["misgendered-xe-1"], builtin_mock)
    assert out.predicted_base == HE and out.m == 0
    perps = out.candidate_perplexities
    assert perps[HE] < perps[SHE] == perps[THEY] == perps[XE]


def test_perplexities_match_hand_computation(builtin_mock, templates):
    # every position is uniform over |V| except "he" after "stoic ." (0.97)
    t = templates["misgendered-he-1"]
    v = len(builtin_mock.spec.vocabulary)
    n = len(builtin_mock.score(t.text.replace("[MASK]", "He")).tokens)
    expected_he = math.exp(-((n - 1) * math.log(1 / v) + math.log(0.97)) / n)
    expected_other = math.exp(-((n - 1) * math.log(1 / v) + math.log(0.01)) / n)
    out = eval_probability(t, builtin_mock)
    assert out.candidate_perplexities[HE] == pytest.approx(expected_he, rel=1e-12)
    assert out.candidate_perplexities[XE] == pytest.approx(expected_other, rel=1e-12)


@pytest.mark.parametrize("case,winner", [(NOM, HE), (DEP, SHE)])
def test_ties_break_on_lowest_surface(case, winner):
    # under a uniform model all candidates tie; lowest surface is "he" (nom) and "her" (pos_dep)
    text = "Sam left. [MASK] smiled." if case == NOM else "Sam left. I saw [MASK] car."
    t = Template("t", "misgendered", text, case, THEY)
    words = ["sam", "left", ".", "smiled", "i", "saw", "car", "he", "she", "they", "xe",
             "his", "her", "their", "xyr"]
    out = eval_probability(t, uniform_model(words))
    assert out.predicted_base == winner
    assert "tie" in out.diagnostics[0]


def _ctx(gold=XE, setting="pre_mask"):
    return Context("c", "misgendered", "Ocie's pronouns are xe/xem/xyrs.", gold, "misgendered_ruff", setting)


def _gen(text, i=0):
    return GenerationRecord("c", i, text, "m", DecodeParams(), 0)


@pytest.mark.parametrize("text,pred,m", [
    (" Xe smiled.", XE, 1),
    (" She smiled and xe left.", SHE, 0),
    (" The weather was nice.", None, 1),
    (" My pronouns are he/him. Xe smiled.", XE, 1),
])
def test_generation_first_pronoun(text, pred, m):
    out = eval_generation(_ctx(), _gen(text))
    assert (out.predicted_base, out.m) == (pred, m)
    assert out.method == GENERATION and out.setting == "pre_mask"


def test_generation_context_mismatch():
    with pytest.raises(ValueError):
        eval_generation(_ctx(), GenerationRecord("other", 0, "x", "m", DecodeParams(), 0))


def test_outcome_consistency_enforced():
    with pytest.raises(ValueError):
        EvalOutcome("i", PROBABILITY, "native", 1, XE, HE)


def test_outcome_round_trip(builtin_mock, templates):
    out = eval_probability(templates["ruff-she-2"], builtin_mock)
    assert EvalOutcome.from_dict(out.to_dict()) == out


def test_run_counts_and_exclusions(builtin_mock):
    data = misgendered_templates() + ruff_templates() + tango_contexts()
    params = DecodeParams(num_samples=3, max_tokens=8)
    run = run_parallel_eval(data, builtin_mock, params)
    assert run.excluded == [{"instance_id": "ruff-he-distractor", "reason": "has_distractor"}]
    assert run.attempted == 24 and not run.errors
    per_template = 1 + 2 * 3
    probs = [o for o in run.outcomes if o.method == PROBABILITY and o.dataset == "tango"]
    assert len(run.outcomes) == 16 * per_template + 8 * 3 + len(probs)
    assert len(run.conversions) == 8 * 3


def test_run_independent_of_workers(builtin_mock):
    data = misgendered_templates() + tango_contexts()
    params = DecodeParams(num_samples=2, max_tokens=8, seed=5)
    a = run_parallel_eval(data, builtin_mock, params, workers=1)
    b = run_parallel_eval(data, builtin_mock, params, workers=4)
    assert [o.to_dict() for o in a.outcomes] == [o.to_dict() for o in b.outcomes]


def test_prob_only_setting_on_contexts_still_converts(builtin_mock):
    params = DecodeParams(num_samples=2, max_tokens=8)
    run = run_parallel_eval(tango_contexts()[:2], builtin_mock, params, settings=["prob"])
    assert len(run.conversions) == 4
    derived = [o for o in run.outcomes if o.method == PROBABILITY]
    assert all(o.sample_index is not None and o.dataset == "tango" for o in derived)


def test_prob_only_setting_on_templates(builtin_mock):
    run = run_parallel_eval(misgendered_templates(), builtin_mock, DecodeParams(), settings=["prob"])
    assert {o.method for o in run.outcomes} == {PROBABILITY} and not run.generations


def test_bad_settings_rejected(builtin_mock):
    with pytest.raises(ValueError):
        run_parallel_eval([], builtin_mock, DecodeParams(), settings=[])


class Flaky:
    model_id = "flaky"

    def __init__(self, inner, bad):
        self.inner, self.bad = inner, bad

    def score(self, text):
        if self.bad in text:
            raise RuntimeError("boom")
        return self.inner.score(text)

    def generate(self, *a, **k):
        return self.inner.generate(*a, **k)


def test_instance_failure_is_recorded(builtin_mock):
    run = run_parallel_eval(misgendered_templates()[:2], Flaky(builtin_mock, "Aamari"), DecodeParams(num_samples=1))
    assert [e["instance_id"] for e in run.errors] == ["misgendered-he-1"]
    assert {o.instance_id for o in run.outcomes} == {"misgendered-he-2"}
