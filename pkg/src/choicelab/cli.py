"""Command-line entry point: generate, build-sets, estimate, experiment, compare."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import experiment as ex
from .errors import ChoiceLabError, EstimationError
from .estimation import covariance, estimate
from .scenario import ScenarioConfig, generate, oracle_path_for, read_dataset, write_dataset
from .sets import write_sets

logger = logging.getLogger("choicelab")

DATASET_NAME = "choices.jsonl"


def _common(parser, suppress):
    kw = {"default": argparse.SUPPRESS} if suppress else {}
    parser.add_argument("--config", type=Path, help="YAML experiment config", **kw)
    parser.add_argument("--seed", type=int, help="override scenario.seed", **kw)
    parser.add_argument("--out", type=Path, help="output directory (default: .)", **kw)
    parser.add_argument("--threads", type=int, help="worker processes (default: 1)", **kw)
    parser.add_argument("-v", "--verbose", action="store_true", **kw)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="choicelab",
        description="Sufficient-set estimation of logit models: simulation and Monte Carlo.")
    _common(parser, suppress=False)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="simulate a dataset and its oracle sidecar")
    _common(p, suppress=True)

    p = sub.add_parser("build-sets", help="build sufficient sets from a dataset")
    _common(p, suppress=True)
    p.add_argument("--data", type=Path, help=f"dataset file (default: OUT/{DATASET_NAME})")

    p = sub.add_parser("estimate", help="estimate beta on a dataset")
    _common(p, suppress=True)
    p.add_argument("--data", type=Path, help=f"dataset file (default: OUT/{DATASET_NAME})")

    p = sub.add_parser("experiment", help="run a Monte Carlo experiment, write CSV")
    _common(p, suppress=True)

    p = sub.add_parser("compare", help="compare (protocol, correction) pairs, write CSV")
    _common(p, suppress=True)
    return parser


def _settings(args):
    if args.config is None:
        raise ChoiceLabError("--config is required")
    doc = ex.load_config(args.config)
    out = args.out or Path(".")
    out.mkdir(parents=True, exist_ok=True)
    return doc, out, max(1, args.threads or 1)


def _scenario(doc, seed) -> ScenarioConfig:
    if "scenario" not in doc:
        raise ChoiceLabError("config has no scenario section")
    scenario = ScenarioConfig.from_dict(doc["scenario"])
    return scenario.with_seed(seed) if seed is not None else scenario


def _protocol_and_correction(doc):
    protocol = ex.ProtocolSpec.parse(doc.get("protocol", "pph"))
    correction = doc.get("correction", "none")
    if correction not in ex.CORRECTIONS:
        raise ChoiceLabError(f"unknown correction {correction!r}")
    return protocol, correction


def _sampling_seed(doc, seed) -> int:
    if seed is not None:
        return seed
    return int(doc.get("scenario", {}).get("seed", 0))


def _cohort_size(doc, history) -> int:
    if history.knobs and "cohort_size" in history.knobs:
        return int(history.knobs["cohort_size"])
    return int(doc.get("scenario", {}).get("cohort_size", 1))


def cmd_generate(args):
    doc, out, _ = _settings(args)
    scenario = _scenario(doc, args.seed)
    history = generate(scenario)
    path = write_dataset(history, out / DATASET_NAME)
    print(f"wrote {path} and {oracle_path_for(path)}")


def cmd_build_sets(args):
    doc, out, _ = _settings(args)
    history = read_dataset(args.data or out / DATASET_NAME)
    protocol, _ = _protocol_and_correction(doc)
    built = ex.build_sets(history, protocol, _sampling_seed(doc, args.seed),
                          _cohort_size(doc, history))
    path = write_sets([b[0] for b in built], out / "sets.jsonl")
    print(f"wrote {path}")


def cmd_estimate(args):
    doc, out, _ = _settings(args)
    history = read_dataset(args.data or out / DATASET_NAME)
    protocol, correction = _protocol_and_correction(doc)
    problem, _ = ex.prepare_problem(history, protocol, correction,
                                    _sampling_seed(doc, args.seed), _cohort_size(doc, history))
    result = estimate(problem)
    if result.converged:
        try:
            result.covariance = covariance(result.beta_hat, problem)
        except EstimationError as exc:
            logger.warning("no standard errors: %s", exc)
    record = result.to_record()
    record["evaluation"] = ex.evaluate(result.beta_hat, history)
    path = out / "estimate.json"
    path.write_text(json.dumps(record, indent=2) + "\n", encoding="utf-8")
    print(json.dumps(record, indent=2))


def cmd_experiment(args):
    doc, out, threads = _settings(args)
    config = ex.ExperimentConfig.from_dict(doc, seed=args.seed)
    path = out / (config.output_path or "experiment.csv")
    rows = ex.run_experiment(config, threads, output_path=path)
    flagged = sorted({str(r.sweep_value) for r in rows if r.flagged})
    if flagged:
        logger.warning("sweep points without converged replications: %s", ", ".join(flagged))
    print(f"wrote {path}")


def cmd_compare(args):
    doc, out, threads = _settings(args)
    configs = ex.compare_configs_from_dict(doc, seed=args.seed)
    path = out / (doc.get("output_path") or "compare.csv")
    ex.compare_protocols(configs, threads, output_path=path)
    print(f"wrote {path}")


COMMANDS = {
    "generate": cmd_generate,
    "build-sets": cmd_build_sets,
    "estimate": cmd_estimate,
    "experiment": cmd_experiment,
    "compare": cmd_compare,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        COMMANDS[args.command](args)
    except (ChoiceLabError, OSError) as exc:
        print(f"choicelab {args.command}: error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
