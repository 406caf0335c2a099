"""Command-line entry point: ``misgender-meta <command> ...``.

Exit codes: 0 success, 1 validation error, 2 transport error, 3 internal error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from ..corpus import DatasetError, DecodeParams, load_dataset, load_records, sniff_format, write_records
from ..divergence import MIN_TRIALS, divergence_report
from ..fixtures import data_path, write_fixtures
from ..model_client import CapabilityError, MockModel, TransportError
from ..pronouns import ConfigError as ProfileError
from ..transform import gen_to_prob, prob_to_gen_post, prob_to_gen_pre
from .annotate import annotate_session, human_automatic, human_human, load_items, sample_plan
from .reports import agree_from_run, load_outcomes, rr_to_files
from .run import BUILTIN, ConfigError, RunConfig, cmd_eval

EXIT_OK, EXIT_VALIDATION, EXIT_TRANSPORT, EXIT_INTERNAL = 0, 1, 2, 3

log = logging.getLogger("misgender_meta")


def _emit(obj) -> None:
    print(json.dumps(obj, indent=1, ensure_ascii=False))


def _dataset(path: str) -> list:
    p = data_path(path) if path in ("misgendered", "ruff", "tango") else Path(path)
    return load_dataset(p, sniff_format(p))


def _mock(args) -> MockModel:
    spec = args.mock_spec or BUILTIN
    return MockModel.load(data_path("mock_spec") if spec == BUILTIN else spec)


def do_convert(args) -> int:
    if args.direction == "prob2gen":
        make = prob_to_gen_pre if args.mode == "pre" else prob_to_gen_post
        out = [make(t) for t in _dataset(args.input)]
        write_records(args.out, out)
        print(f"wrote {len(out)} contexts to {args.out}")
        return EXIT_OK
    if not args.generations:
        raise ConfigError("gen2prob needs --generations")
    contexts = {c.id: c for c in _dataset(args.input)}
    # a run's generations also cover contexts derived from templates; keep only ours
    gens = [g for g in load_records(args.generations, "generation_jsonl") if g.context_id in contexts]
    if not gens:
        raise DatasetError(f"no generation in {args.generations} refers to a context in {args.input}")
    templates, statuses = [], []
    for g in gens:
        res = gen_to_prob(contexts[g.context_id], g)
        statuses.append({"context_id": g.context_id, "sample_index": g.sample_index,
                         "status": res.status, "diagnostics": res.diagnostics})
        if res.product is not None:
            templates.append(res.product)
    write_records(args.out, templates)
    write_records(Path(args.out).with_suffix(".status.jsonl"), statuses)
    print(f"wrote {len(templates)} templates ({len(gens) - len(templates)} without a pronoun) to {args.out}")
    return EXIT_OK


def _config(args) -> RunConfig:
    overrides = {
        "datasets": args.dataset or None,
        "out": args.out,
        "endpoint": args.endpoint,
        "mock_spec": args.mock_spec,
        "seed": args.seed,
        "workers": args.workers,
        "model": args.model,
        "settings": args.settings.split(",") if args.settings else None,
    }
    if args.samples is not None:
        overrides["decode"] = {**DecodeParams().to_dict(), "num_samples": args.samples}
    if args.config:
        return RunConfig.load(args.config, **overrides)
    return RunConfig.from_mapping({}, **overrides)


def do_eval(args) -> int:
    config = _config(args)
    run = cmd_eval(config)
    print(f"{len(run.outcomes)} outcomes, {len(run.errors)} failed, {len(run.excluded)} excluded -> {config.out}")
    return EXIT_OK


def do_agree(args) -> int:
    reports, notes = agree_from_run(args.run_dir, args.out)
    for r in reports:
        a = r.agreement
        print(f"{'/'.join(r.key)}: n={r.n_instances} p_o={a.p_o if a else None} "
              f"mcc={a.mcc if a else None} kappa={a.kappa if a else None}")
    for n in notes:
        print(n)
    return EXIT_OK


def do_report(args) -> int:
    code = do_agree(args)
    run_dir = Path(args.run_dir)
    rr_to_files(run_dir / "generations.jsonl", run_dir / "contexts.jsonl", Path(args.out or run_dir))
    return code


def do_divergence(args) -> int:
    if args.trials < MIN_TRIALS:
        raise ConfigError(f"--trials must be at least {MIN_TRIALS}")
    model = _mock(args)
    rows = []
    for t in _dataset(args.input):
        for row in divergence_report(t, model, args.trials, args.seed, args.workers):
            rows.append({"instance_id": t.id, **row})
    if args.out:
        write_records(args.out, rows)
    else:
        _emit(rows)
    return EXIT_OK


def do_rr(args) -> int:
    rows, aggregates = rr_to_files(args.generations, args.contexts, args.out or ".")
    _emit(aggregates)
    return EXIT_OK


def do_annotate(args) -> int:
    items = load_items(args.generations, args.contexts)
    if args.per_stratum is not None:
        items = sample_plan(items, args.per_stratum, args.seed)
    n = annotate_session(items, args.annotator, args.out, seed=args.seed)
    print(f"labeled {n} item(s); annotations in {args.out}")
    return EXIT_OK


def do_validate(args) -> int:
    a = load_records(args.annotations, "annotation_jsonl")
    if args.other:
        result = human_human(a, load_records(args.other, "annotation_jsonl")).to_dict()
    else:
        result = human_automatic(a, load_outcomes(args.outcomes)).to_dict()
    _emit(result)
    return EXIT_OK


def do_fixtures(args) -> int:
    for name, path in write_fixtures(args.out).items():
        print(f"{name}: {path}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="TOML or JSON run configuration")
    common.add_argument("--endpoint", help="model server base URL (else MM_ENDPOINT)")
    common.add_argument("--mock-spec", help=f"mock model spec JSON, or '{BUILTIN}'")
    common.add_argument("--seed", type=int, default=None)
    common.add_argument("--out")
    common.add_argument("--workers", type=int, default=None)
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(
        prog="misgender-meta", description="Compare probability- and generation-based misgendering evaluations.")
    sub = p.add_subparsers(dest="command", required=True)

    c = sub.add_parser("convert", parents=[common], help="convert between evaluation input shapes")
    c.add_argument("direction", choices=("prob2gen", "gen2prob"))
    c.add_argument("--input", required=True, help="templates (prob2gen) or contexts (gen2prob)")
    c.add_argument("--mode", choices=("pre", "post"), default="pre")
    c.add_argument("--generations", help="generation JSONL (gen2prob)")
    c.set_defaults(func=do_convert)

    e = sub.add_parser("eval", parents=[common], help="run both evaluations and write outcome tables")
    e.add_argument("--dataset", action="append", help="dataset path or fixture name; repeatable")
    e.add_argument("--model", default=None)
    e.add_argument("--settings", help="comma list from prob,gen_pre,gen_post")
    e.add_argument("--samples", type=int, default=None, help="generations per context")
    e.set_defaults(func=do_eval)

    for name, func, text in (("agree", do_agree, "agreement report per cell"),
                             ("report", do_report, "agreement report plus repetition rates")):
        a = sub.add_parser(name, parents=[common], help=text)
        a.add_argument("run_dir")
        a.set_defaults(func=func)

    d = sub.add_parser("divergence", parents=[common], help="closed-form and Monte-Carlo disagreement")
    d.add_argument("--input", required=True)
    d.add_argument("--trials", type=int, default=MIN_TRIALS)
    d.set_defaults(func=do_divergence)

    r = sub.add_parser("rr", parents=[common], help="repetition rate of generations")
    r.add_argument("generations")
    r.add_argument("--contexts")
    r.set_defaults(func=do_rr)

    an = sub.add_parser("annotate", parents=[common], help="interactive labeling session")
    an.add_argument("generations")
    an.add_argument("--contexts")
    an.add_argument("--annotator", required=True)
    an.add_argument("--per-stratum", type=int, default=None,
                    help="label at most N generations per (setting, gold pronoun)")
    an.set_defaults(func=do_annotate)

    v = sub.add_parser("validate", parents=[common], help="human-human or human-automatic agreement")
    v.add_argument("annotations")
    g = v.add_mutually_exclusive_group(required=True)
    g.add_argument("--other", help="second annotator's file")
    g.add_argument("--outcomes", help="outcome table from eval")
    v.set_defaults(func=do_validate)

    f = sub.add_parser("fixtures", parents=[common], help="write the synthetic fixture corpus")
    f.set_defaults(func=do_fixtures)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if args.seed is None and args.command != "eval":
        args.seed = 0
    if args.workers is None and args.command != "eval":
        args.workers = 1
    if args.command == "annotate" and not args.out:
        args.out = "annotations.jsonl"
    if args.command in ("convert", "fixtures") and not args.out:
        print("error: --out is required", file=sys.stderr)
        return EXIT_VALIDATION
    try:
        return args.func(args)
    except TransportError as exc:
        print(f"transport error: {exc}", file=sys.stderr)
        return EXIT_TRANSPORT
    except (ConfigError, DatasetError, ProfileError, CapabilityError, ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except Exception as exc:  # pragma: no cover - last resort
        log.exception("internal error")
        print(f"internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
