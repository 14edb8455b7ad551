"""Command-line surface.

Exit codes: 0 verdict pass, 1 verdict fail, 2 usage or configuration
error, 3 data error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from . import __version__
from .agent_env import load_env, load_policy, agent_delta
from .core import ScoringFunction, verdict as core_verdict
from .ctest import (
    CtestItem,
    generate_item,
    item_key_dict,
    item_public_dict,
    parse_program,
    run_program,
    score_item,
)
from .errors import CatfidError, ConfigError, DataError, InvalidReport, MalformedEnv
from .generalization import builtin_generator, builtin_suite, holdout_eval, load_suite
from .harness import (
    SEED_ENV_VAR,
    config_from_file,
    load_sample_set,
    render_report,
    run_eval,
)
from .judge_service import serve as make_server

EXIT_PASS = 0
EXIT_FAIL = 1
EXIT_USAGE = 2
EXIT_DATA = 3


def _env_seed() -> int | None:
    raw = os.environ.get(SEED_ENV_VAR)
    return int(raw) if raw else None


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="catfid", description=__doc__)
    parser.add_argument("--version", action="version", version=f"catfid {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("eval", help="gap + verdict between two sample files")
    p.add_argument("--original", required=True)
    p.add_argument("--generated", required=True)
    p.add_argument("--config", required=True)
    p.add_argument("--out-json")
    p.add_argument("--out-md")

    p = sub.add_parser("resolution", help="noise floor of one sample file")
    p.add_argument("--set", dest="set_path", required=True)
    p.add_argument("--config", required=True)

    ctest = sub.add_parser("ctest", help="sequence battery commands").add_subparsers(
        dest="ctest_command", required=True
    )
    p = ctest.add_parser("gen", help="generate a battery with its answer key")
    p.add_argument("--h", dest="difficulty", type=int, required=True)
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--prefix-len", type=int, default=5)
    p.add_argument("--alphabet", type=int, default=26)
    p = ctest.add_parser("score", help="score an answers file against a key")
    p.add_argument("--battery", required=True)
    p.add_argument("--answers", required=True)
    p.add_argument("--key", required=True)

    agent = sub.add_parser("agent", help="reward-optimality commands").add_subparsers(
        dest="agent_command", required=True
    )
    p = agent.add_parser("eval", help="gap between a policy and the computed optimum")
    p.add_argument("--env", required=True)
    p.add_argument("--policy", required=True)
    p.add_argument("--episodes", type=int, required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--epsilon", type=float, default=None)
    p.add_argument("--sigma", default="mean", choices=["mean", "max"])

    suite = sub.add_parser("suite", help="multi-category holdout commands").add_subparsers(
        dest="suite_command", required=True
    )
    p = suite.add_parser("eval", help="evaluate a builtin generator on a suite")
    p.add_argument("--suite", required=True)
    p.add_argument("--generator", required=True)
    p.add_argument("--config", required=True)
    p.add_argument("--out-md")
    p = suite.add_parser("init", help="write a builtin suite file")
    p.add_argument("--name", required=True, choices=["sequences", "scalars"])
    p.add_argument("--out", required=True)

    p = sub.add_parser("serve", help="start the judging service")
    p.add_argument("--addr", default="127.0.0.1:8321")
    p.add_argument("--log", required=True)
    p.add_argument("--ui-dir", default=None)

    report = sub.add_parser("report", help="report rendering").add_subparsers(
        dest="report_command", required=True
    )
    p = report.add_parser("render")
    p.add_argument("--in", dest="in_path", required=True)
    p.add_argument("--format", required=True, choices=["md", "json"])

    return parser


def _cmd_eval(args) -> int:
    for path in (args.original, args.generated, args.config):
        if not Path(path).exists():
            print(f"error: no such file: {path}", file=sys.stderr)
            return EXIT_USAGE
    config = config_from_file(args.config, default_seed=_env_seed())
    report = run_eval(config, args.original, args.generated)
    json_text = render_report(report, "json")
    out_json = args.out_json or config.output.get("json")
    out_md = args.out_md or config.output.get("markdown")
    if out_json:
        Path(out_json).write_text(json_text, encoding="utf-8")
    if out_md:
        Path(out_md).write_text(render_report(report, "markdown"), encoding="utf-8")
    sys.stdout.write(json_text)
    return EXIT_PASS if report["verdict"]["pass"] else EXIT_FAIL


def _cmd_resolution(args) -> int:
    for path in (args.set_path, args.config):
        if not Path(path).exists():
            print(f"error: no such file: {path}", file=sys.stderr)
            return EXIT_USAGE
    config = config_from_file(args.config, default_seed=_env_seed())
    if config.n_splits is None:
        raise ConfigError("resolution command needs a resolution section")
    s = load_sample_set(args.set_path)
    from .core import estimate_resolution
    from .distinguishers import advantage_to_delta, train_classifier_distinguisher

    delta_fn = None
    family = None
    if config.is_classifier:
        cspec = config.classifier_spec()
        delta_fn = lambda a, b: advantage_to_delta(
            train_classifier_distinguisher(a, b, cspec)[1]
        )
    else:
        family = config.family_builder()
    estimate = estimate_resolution(
        s, family, config.sigma, config.n_splits, config.seed, delta_fn=delta_fn
    )
    sys.stdout.write(json.dumps(estimate.to_dict(), sort_keys=True, indent=2) + "\n")
    return EXIT_PASS


def _cmd_ctest_gen(args) -> int:
    seed = args.seed if args.seed is not None else (_env_seed() or 0)
    out = Path(args.out)
    key_path = out.with_suffix(out.suffix + ".key") if out.suffix else out.with_suffix(".key")
    items: list[CtestItem] = []
    for i in range(args.count):
        items.append(
            generate_item(
                args.difficulty,
                args.prefix_len,
                args.alphabet,
                seed=seed + i,
            )
        )
    with open(out, "w", encoding="utf-8") as f:
        for item in items:
            f.write(json.dumps(item_public_dict(item), sort_keys=True) + "\n")
    with open(key_path, "w", encoding="utf-8") as f:
        for item in items:
            f.write(json.dumps(item_key_dict(item), sort_keys=True) + "\n")
    print(f"wrote {len(items)} items to {out} (key: {key_path})")
    return EXIT_PASS


def _read_jsonl(path) -> list[dict]:
    docs = []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                docs.append(json.loads(line))
            except ValueError as e:
                raise DataError(f"bad JSON ({e})", lineno) from None
    return docs


def _cmd_ctest_score(args) -> int:
    battery = _read_jsonl(args.battery)
    answers = _read_jsonl(args.answers)
    key = _read_jsonl(args.key)
    if not len(battery) == len(answers) == len(key):
        raise DataError(
            f"battery ({len(battery)}), answers ({len(answers)}) and key ({len(key)}) "
            "must have the same length"
        )
    correct = 0
    rows = []
    for i, (item_doc, answer_doc, key_doc) in enumerate(zip(battery, answers, key)):
        program = parse_program(key_doc["program"])
        prefix = tuple(item_doc["prefix"])
        item = CtestItem(
            prefix=prefix,
            continuation=int(key_doc["continuation"]),
            difficulty_h=int(item_doc["h"]),
            minimal_program=program,
            alphabet_size=int(item_doc["alphabet"]),
            enumeration_bound=float(item_doc["h"] + 1),
        )
        expected = run_program(program, len(prefix), len(prefix), item.alphabet_size)
        if expected != prefix:
            raise DataError(f"key program does not reproduce the battery prefix (item {i})")
        outcome = score_item(item, int(answer_doc["answer"]))
        correct += outcome == "correct"
        rows.append({"item": i, "outcome": outcome})
    summary = {"items": len(rows), "correct": correct, "accuracy": correct / len(rows)}
    sys.stdout.write(json.dumps({"rows": rows, "summary": summary}, indent=2) + "\n")
    return EXIT_PASS


def _cmd_agent_eval(args) -> int:
    seed = args.seed if args.seed is not None else (_env_seed() or 0)
    env = load_env(args.env)
    policy = load_policy(args.policy)
    report = agent_delta(env, policy, args.episodes, ScoringFunction(args.sigma), seed)
    doc = {"delta_report": report.to_dict()}
    code = EXIT_PASS
    if args.epsilon is not None:
        v = core_verdict(report, args.epsilon)
        doc["verdict"] = v.to_dict()
        code = EXIT_PASS if v.passed else EXIT_FAIL
    sys.stdout.write(json.dumps(doc, sort_keys=True, indent=2) + "\n")
    return code


def _cmd_suite_eval(args) -> int:
    for path in (args.suite, args.config):
        if not Path(path).exists():
            print(f"error: no such file: {path}", file=sys.stderr)
            return EXIT_USAGE
    config = config_from_file(args.config, default_seed=_env_seed())
    if config.is_classifier:
        raise ConfigError("suite evaluation needs a plain distinguisher family")
    suite = load_suite(args.suite)
    options = config.suite_options
    gen = builtin_generator(args.generator, suite, noise=options.get("noise", 0.0))
    result = holdout_eval(
        gen,
        suite,
        k_shot=options.get("k_shot", 5),
        m_gen=options.get("m_gen", 100),
        family=config.family_builder(),
        sigma=config.sigma,
        epsilon=config.epsilon,
        seed=config.seed,
        m_ref=options.get("m_ref"),
    )
    doc = result.to_dict()
    if args.out_md:
        from .harness import render_suite_markdown

        Path(args.out_md).write_text(render_suite_markdown(doc), encoding="utf-8")
    sys.stdout.write(json.dumps(doc, sort_keys=True, indent=2) + "\n")
    return EXIT_PASS if result.all_pass else EXIT_FAIL


def _cmd_suite_init(args) -> int:
    suite = builtin_suite(args.name)
    Path(args.out).write_text(
        json.dumps(suite.to_dict(), sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )
    print(f"wrote suite {args.name!r} to {args.out}")
    return EXIT_PASS


def _cmd_serve(args) -> int:
    server = make_server(args.addr, args.log, ui_dir=args.ui_dir)
    host, port = server.server_address[:2]
    print(f"listening on http://{host}:{port} (log: {args.log})", flush=True)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
        server.service.close()
    return EXIT_PASS


def _cmd_report_render(args) -> int:
    if not Path(args.in_path).exists():
        print(f"error: no such file: {args.in_path}", file=sys.stderr)
        return EXIT_USAGE
    with open(args.in_path, encoding="utf-8") as f:
        report = json.load(f)
    fmt = "markdown" if args.format == "md" else "json"
    sys.stdout.write(render_report(report, fmt))
    return EXIT_PASS


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "eval":
            return _cmd_eval(args)
        if args.command == "resolution":
            return _cmd_resolution(args)
        if args.command == "ctest":
            return _cmd_ctest_gen(args) if args.ctest_command == "gen" else _cmd_ctest_score(args)
        if args.command == "agent":
            return _cmd_agent_eval(args)
        if args.command == "suite":
            return _cmd_suite_eval(args) if args.suite_command == "eval" else _cmd_suite_init(args)
        if args.command == "serve":
            return _cmd_serve(args)
        if args.command == "report":
            return _cmd_report_render(args)
        raise AssertionError(f"unhandled command {args.command!r}")
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, MalformedEnv, InvalidReport) as e:
        print(f"data error: {e}", file=sys.stderr)
        return EXIT_DATA
    except FileNotFoundError as e:
        print(f"error: no such file: {e.filename}", file=sys.stderr)
        return EXIT_USAGE
    except CatfidError as e:
        print(f"data error: {e}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
