import json

import pytest

from misgender_meta.corpus import AnnotationRecord, Context, DecodeParams, GenerationRecord, Label, load_records, write_records
from misgender_meta.evaluation import GENERATION, PROBABILITY, EvalOutcome
from misgender_meta.metrics import sigma
from misgender_meta.pronouns import BasePronoun
from misgender_meta.workbench.annotate import (
    Item, annotate_session, binary_collapse, extraneous_gendered, human_automatic, human_human,
    load_items, presentation_order, sample_plan, suggest_label,
)
from misgender_meta.workbench.cli import main
from misgender_meta.workbench.reports import cmd_agree, cmd_rr
from misgender_meta.workbench.run import ConfigError, RunConfig, cmd_eval

HE, XE = BasePronoun.HE, BasePronoun.XE


def outcome(i, method, m, setting="pre_mask", sample=None, gold=HE, dataset="misgendered"):
    pred = gold if m else XE
    return EvalOutcome(f"t{i}", method, setting, m, gold, pred, sample, dataset=dataset, model_id="mock",
                       context_id=f"t{i}:{setting}" if method == GENERATION else "")


def hand_table(prob_m, first_gen_m, rest=(1, 1, 1, 1)):
    out = []
    for i, (p, g) in enumerate(zip(prob_m, first_gen_m)):
        out.append(outcome(i, PROBABILITY, p, "native"))
        for s, m in enumerate((g,) + tuple(rest)):
            out.append(outcome(i, GENERATION, m, sample=s))
    return out


def test_agree_matches_hand_contingency():
    # tp=3 fp=1 fn=1 tn=3 -> p_o = 0.75, mcc = kappa = 0.5
    reports, notes = cmd_agree(hand_table([1, 1, 1, 0, 1, 0, 0, 0], [1, 1, 1, 1, 0, 0, 0, 0]))
    assert len(reports) == 1
    r = reports[0]
    assert r.key == ("misgendered", "mock", "he", "pre_mask") and r.n_instances == 8
    assert r.agreement.p_o == 0.75
    assert r.agreement.mcc == pytest.approx(0.5) and r.agreement.kappa == pytest.approx(0.5)
    # sigma of (g,1,1,1,1) is 0 or 0.4
    assert r.sigma_gen["distribution"] == {"0.0000": 4, "0.4000": 4}
    assert r.failure_rate is None
    assert len(notes) == 3 and all("omitted" in n for n in notes)


def test_agree_beta_fit_recomputable():
    outs = hand_table([1, 1, 1, 0, 1, 0, 0, 0], [1, 1, 1, 1, 0, 0, 0, 0], rest=(1, 0, 1, 1))
    r = cmd_agree(outs)[0][0]
    from misgender_meta.metrics import beta_fit, disagreement_series
    prob = {f"t{i}": o.m for i, o in enumerate(x for x in outs if x.method == PROBABILITY)}
    gen = {}
    for o in outs:
        if o.method == GENERATION:
            gen.setdefault(o.instance_id, []).append(o.m)
    assert r.beta == beta_fit(disagreement_series(prob, gen)).to_dict()


def test_all_correct_probability_column_marks_mcc_undefined():
    r = cmd_agree(hand_table([1] * 8, [1, 0, 1, 0, 1, 1, 1, 1]))[0][0]
    assert r.agreement.mcc is None and "constant" in r.agreement.undefined_reason
    assert r.row()["mcc"] is None


def test_context_cells_carry_failure_rate():
    outs = []
    for s in range(5):
        outs.append(outcome(0, GENERATION, 1, "native", s, dataset="tango"))
    outs.append(outcome(0, PROBABILITY, 1, "native", 2, dataset="tango"))
    conv = [{"instance_id": "t0", "status": "no_pronoun" if s < 2 else "ok"} for s in range(5)]
    r = cmd_agree(outs, conv)[0][0]
    assert r.failure_rate == 0.4 and r.sigma_prob["n"] == 1


def test_rr_aggregates():
    p = DecodeParams()
    gens = [GenerationRecord("c", 0, "a b a b a b a", "m", p, 0), GenerationRecord("c", 1, "one two three four", "m", p, 0),
            GenerationRecord("c", 2, "hi", "m", p, 0)]
    ctx = [Context("c", "tango", "x", HE, "tango", "native")]
    rows, agg = cmd_rr(gens, ctx)
    assert [r["rr"] for r in rows] == [1.0, 0.0, None]
    assert agg == [{"model_id": "m", "pronoun": "he", "n": 2, "mean": 0.5, "std": 0.5}]


# ----------------------------------------------------------------- cmd_eval


def run_config(tmp_path, name, **kw):
    base = dict(datasets=["misgendered", "tango"], out=str(tmp_path / name), mock_spec="builtin",
                decode={"num_samples": 2, "max_tokens": 10})
    return RunConfig(**{**base, **kw})


def tree(path):
    return {p.name: p.read_bytes() for p in sorted(path.iterdir())}


def test_eval_is_reproducible(tmp_path):
    cmd_eval(run_config(tmp_path, "a"))
    cmd_eval(run_config(tmp_path, "b", workers=3))
    assert tree(tmp_path / "a") == tree(tmp_path / "b")
    manifest = json.loads((tmp_path / "a" / "manifest.json").read_text())
    assert manifest["files"]["outcomes.jsonl"]
    assert manifest["config"]["seed"] == 0


def test_eval_overwrites_previous_run_only(tmp_path):
    cmd_eval(run_config(tmp_path, "a"))
    cmd_eval(run_config(tmp_path, "a", seed=1))
    (tmp_path / "other").mkdir()
    (tmp_path / "other" / "keep.txt").write_text("x")
    with pytest.raises(ConfigError):
        cmd_eval(run_config(tmp_path, "other"))
    assert (tmp_path / "other" / "keep.txt").exists()


def test_config_validation(tmp_path, monkeypatch):
    monkeypatch.delenv("MM_ENDPOINT", raising=False)
    with pytest.raises(ConfigError):
        run_config(tmp_path, "x", settings=[])
    with pytest.raises(ConfigError):
        RunConfig(datasets=["misgendered"], out="x", mock_spec=None, endpoint=None)


def test_config_file(tmp_path):
    cfg = tmp_path / "run.toml"
    cfg.write_text('datasets = ["misgendered"]\nmock_spec = "builtin"\nsettings = ["prob"]\n')
    c = RunConfig.load(cfg, out=str(tmp_path / "o"))
    assert c.settings == ("prob",)
    bad = tmp_path / "bad.json"
    bad.write_text('{"datasets": ["x"], "colour": 1}')
    with pytest.raises(ConfigError):
        RunConfig.load(bad, out="o")


def test_cli_eval_and_report(tmp_path, capsys):
    out = tmp_path / "run"
    assert main(["eval", "--dataset", "misgendered", "--mock-spec", "builtin", "--out", str(out), "--samples", "2"]) == 0
    assert (out / "outcomes_pre_mask.jsonl").exists()
    assert main(["report", str(out), "--out", str(tmp_path / "rep")]) == 0
    cells = json.loads((tmp_path / "rep" / "report.json").read_text())["cells"]
    assert {c["setting"] for c in cells} == {"pre_mask", "post_mask"}
    assert (tmp_path / "rep" / "report.csv").read_text().startswith("dataset,model,pronoun,setting")
    assert (tmp_path / "rep" / "rr_summary.csv").exists()


def test_cli_unreachable_endpoint_exits_2_without_tables(tmp_path, monkeypatch):
    monkeypatch.setenv("MM_TIMEOUT_MS", "200")
    out = tmp_path / "run"
    code = main(["eval", "--dataset", "misgendered", "--endpoint", "http://127.0.0.1:9", "--out", str(out)])
    assert code == 2
    assert not out.exists()


def test_cli_validation_error_exits_1(tmp_path):
    assert main(["eval", "--dataset", str(tmp_path / "missing.jsonl"), "--mock-spec", "builtin",
                 "--out", str(tmp_path / "o")]) == 1


def test_cli_convert(tmp_path):
    assert main(["convert", "prob2gen", "--input", "misgendered", "--mode", "post", "--out", str(tmp_path / "c.jsonl")]) == 0
    ctxs = load_records(tmp_path / "c.jsonl", "context_jsonl")
    assert all(c.setting == "post_mask" for c in ctxs) and len(ctxs) == 8


def test_cli_gen2prob_uses_only_matching_contexts(tmp_path):
    run = tmp_path / "run"
    assert main(["eval", "--dataset", "misgendered", "--dataset", "tango", "--mock-spec", "builtin",
                 "--out", str(run), "--samples", "2"]) == 0
    out = tmp_path / "t.jsonl"
    assert main(["convert", "gen2prob", "--input", "tango", "--generations", str(run / "generations.jsonl"),
                 "--out", str(out)]) == 0
    statuses = [
        json.loads(line) for line in out.with_suffix(".status.jsonl").read_text().splitlines()]
    assert statuses and all(s["context_id"].startswith("tango-") for s in statuses)
    assert main(["convert", "gen2prob", "--input", "tango", "--out", str(out)]) == 1


def test_cli_divergence(tmp_path):
    out = tmp_path / "d.jsonl"
    assert main(["divergence", "--input", "misgendered", "--mock-spec", "builtin", "--out", str(out)]) == 0
    rows = [json.loads(x) for x in out.read_text().splitlines()]
    assert len(rows) == 16
    assert main(["divergence", "--input", "misgendered", "--trials", "10"]) == 1


# --------------------------------------------------------------- annotation


def items(n=3):
    ctx = Context("c", "misgendered", "Dennis's pronouns are xe/xem/xyrs.", XE, "misgendered_ruff", "pre_mask")
    p = DecodeParams(num_samples=max(n, 1))
    return [Item(ctx, GenerationRecord("c", i, f"Xe left {i}.", "m", p, 0)) for i in range(n)]


def scripted(keys):
    it = iter(keys)

    def read(prompt):
        try:
            return next(it)
        except StopIteration:
            raise EOFError
    return read


def test_stepper_labels_and_reprompts(tmp_path):
    out = tmp_path / "ann.jsonl"
    shown = []
    n = annotate_session(items(2), "ann1", out, read=scripted(["x", "g", "n", "odd", "2", "1"]), emit=shown.append)
    assert n == 2
    recs = load_records(out, "annotation_jsonl")
    order = [it.key for it in presentation_order(items(2), "ann1")]
    assert [r.key for r in recs] == order
    assert recs[0].label == Label.MISGENDERING and recs[0].extraneous_gendered and recs[0].notes == "odd"
    assert recs[1].label == Label.CORRECT and not recs[1].extraneous_gendered
    assert any("unknown key" in s for s in shown)


def test_stepper_resumes(tmp_path):
    out = tmp_path / "ann.jsonl"
    assert annotate_session(items(3), "a", out, read=scripted(["3", "q"]), emit=lambda s: None) == 1
    assert annotate_session(items(3), "a", out, read=scripted(["1"]), emit=lambda s: None) == 1
    assert annotate_session(items(3), "a", out, read=scripted(["1", "1"]), emit=lambda s: None) == 1
    recs = load_records(out, "annotation_jsonl")
    assert len({r.key for r in recs}) == 3 == len(recs)
    assert annotate_session(items(3), "a", out, read=scripted([]), emit=lambda s: None) == 0


def test_order_depends_on_annotator():
    many = items(20)
    assert presentation_order(many, "a") == presentation_order(many, "a")
    assert presentation_order(many, "a") != presentation_order(many, "b")


def test_sample_plan_caps_each_stratum(tmp_path):
    run = tmp_path / "run"
    assert main(["eval", "--dataset", "misgendered", "--mock-spec", "builtin", "--out", str(run),
                 "--samples", "3", "--settings", "gen_pre,gen_post"]) == 0
    items = load_items(run / "generations.jsonl", run / "contexts.jsonl")
    plan = sample_plan(items, 2, seed=5)
    strata = {}
    for it in plan:
        strata.setdefault((it.context.setting, it.context.gold_base), []).append(it)
    full = {(it.context.setting, it.context.gold_base) for it in items}
    assert set(strata) == full and all(len(v) == 2 for v in strata.values())
    assert [it.key for it in plan] == [it.key for it in sample_plan(items, 2, seed=5)]
    assert len(sample_plan(items, 10_000)) == len(items)
    with pytest.raises(ValueError):
        sample_plan(items, 0)


def test_suggest_label_override():
    assert suggest_label("She smiled. Xe left.", XE, "misgendered_ruff") == Label.MISGENDERING
    assert suggest_label("Xe left. Xe smiled.", XE, "misgendered_ruff") == Label.CORRECT


def test_extraneous_gendered():
    assert extraneous_gendered("She is a great actress.", "Casy's pronouns are they/them.")
    assert not extraneous_gendered("The actress smiled.", "Casy is an actress.")


def test_binary_collapse():
    assert [binary_collapse(l) for l in Label] == [1, 0, 1]


def ann(i, label, extra=False, who="a"):
    return AnnotationRecord("c", i, label, extra, "", who)


def test_validate_identical_files():
    recs = [ann(i, Label.CORRECT) for i in range(4)]
    res = human_human(recs, recs)
    assert (res.label_agreement, res.extraneous_agreement) == (1.0, 1.0)


def test_validate_human_automatic():
    outs = [EvalOutcome("t", GENERATION, "pre_mask", 1, XE, XE, i, context_id="c") for i in range(4)]
    anns = [ann(0, Label.MISGENDERING)] + [ann(i, Label.CORRECT) for i in (1, 2)] + [ann(3, Label.NO_PRONOUN)]
    rep = human_automatic(anns, outs)
    assert rep.n == 4 and rep.p_o == 0.75


def test_validate_needs_overlap():
    with pytest.raises(ValueError):
        human_human([ann(0, Label.CORRECT)], [ann(1, Label.CORRECT)])
    with pytest.raises(ValueError):
        human_automatic([ann(0, Label.CORRECT)], [])


def test_cli_validate(tmp_path, capsys):
    a, b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
    write_records(a, [ann(i, Label.CORRECT) for i in range(4)])
    write_records(b, [ann(i, Label.CORRECT if i else Label.NO_PRONOUN, who="b") for i in range(4)])
    assert main(["validate", str(a), "--other", str(b)]) == 0
    assert json.loads(capsys.readouterr().out)["label_agreement"] == 0.75
