"""Command line front end.

    countertune train     --dataset DIR --out MODEL [--family tree|regression]
    countertune simulate  --dataset DIR --searcher profile|random [--model M] --out DIR
    countertune compare   --dataset DIR --model M --out DIR
    countertune cross-eval --dataset DIR --model MODEL.json --out DIR
    countertune inspect   --dataset DIR --config IDX
    countertune gen-synth --preset NAME | --spec FILE --out DIR

--model takes a model file path or the word `exact`, which replays the
dataset's own measured counters (the upper bound for any trained model).
Failures exit nonzero after printing one line `error: {...}` with a JSON
payload to stderr.
"""

import argparse
import json
import sys

from . import harness, models, synth
from .bottlenecks import (DEFAULT_INST_REACTION, INSTRUCTION_BOUND_REACTION,
                          analyze, react)
from .errors import CounterTuneError
from .space import load_dataset_dir, well_performing_set


def _add_dataset_arg(parser):
    parser.add_argument("--dataset", required=True,
                        help="dataset directory (space.csv, measurements.csv, arch.txt)")


def _add_experiment_args(parser):
    parser.add_argument("--reps", type=int, default=harness.DEFAULT_REPETITIONS,
                        help="repetitions for step statistics (default %(default)s)")
    parser.add_argument("--time-reps", type=int, default=harness.DEFAULT_TIME_REPETITIONS,
                        help="repetitions feeding the time-convergence curve "
                             "(default %(default)s)")
    parser.add_argument("--n", type=int, default=5,
                        help="runtime-only evaluations per profiled one (default %(default)s)")
    parser.add_argument("--i", type=int, default=None,
                        help="outer iterations; default covers the whole space")
    parser.add_argument("--seed", type=int, default=0, help="master seed")
    parser.add_argument("--slack", type=float, default=1.1,
                        help="well-performing cut as a multiple of the best runtime")
    parser.add_argument("--overhead", type=float, default=harness.DEFAULT_PROFILING_OVERHEAD,
                        help="simulated cost multiplier of a profiled run "
                             "(default %(default)s)")
    reaction = parser.add_mutually_exclusive_group()
    reaction.add_argument("--inst-reaction", type=float, default=DEFAULT_INST_REACTION,
                          help="instruction reaction threshold (default %(default)s)")
    reaction.add_argument("--instruction-bound", action="store_true",
                          help=f"shortcut for --inst-reaction {INSTRUCTION_BOUND_REACTION}")
    parser.add_argument("--literal-sign", action="store_true",
                        help="score with the published numerator orientation "
                             "(profile minus candidate)")
    parser.add_argument("--top-k", type=int, default=None,
                        help="score only the K nearest unexplored configurations")


def _inst_reaction(args) -> float:
    return INSTRUCTION_BOUND_REACTION if args.instruction_bound else args.inst_reaction


def _load_model(spec: str, dataset):
    if spec == "exact":
        return models.ExactModelSet(dataset)
    return models.load_model_set(spec)


def _cmd_train(args) -> int:
    dataset = load_dataset_dir(args.dataset)
    ms = models.train_model_set(dataset, family=args.family, seed=args.seed)
    models.save_model_set(ms, args.out)
    print(f"trained {args.family} models on {dataset.arch.name}/{dataset.input_label} "
          f"({len(dataset.records)} records)")
    for abbr in ms.counters:
        if abbr in ms.trees:
            t = ms.trees[abbr]
            print(f"counter {abbr} tree depth {t.max_depth} min_leaf {t.min_leaf} "
                  f"test_mae {t.test_mae:.6g} test_rmse {t.test_rmse:.6g}")
        else:
            fitted = ms.regressions[abbr]
            print(f"counter {abbr} regression subspaces {len(fitted)}")
    print(f"model written to {args.out}")
    return 0


def _experiment_spec(args, dataset, searcher, model, name) -> harness.ExperimentSpec:
    return harness.ExperimentSpec(
        dataset=dataset, searcher=searcher, model=model, name=name,
        repetitions=args.reps, inner_steps=args.n, outer_iterations=args.i,
        seed=args.seed, slack=args.slack, profiling_overhead=args.overhead,
        inst_reaction=_inst_reaction(args), literal_sign=args.literal_sign,
        score_top_k=args.top_k, time_repetitions=args.time_reps)


def _print_report(rep: harness.ConvergenceReport) -> None:
    line = (f"{rep.name}: searcher {rep.searcher}, {rep.repetitions} reps, "
            f"mean steps {rep.mean_steps:.3f}, median {rep.median_steps:.1f}, "
            f"stddev {rep.stddev_steps:.3f}, censored {rep.censored}, "
            f"mean simulated time {rep.mean_time_seconds:.6f}s")
    if rep.improvement is not None:
        line += f", improvement over {rep.baseline_name} {rep.improvement:.3f}x"
    print(line)


def _cmd_simulate(args) -> int:
    dataset = load_dataset_dir(args.dataset)
    model = None
    if args.searcher == harness.SEARCHER_PROFILE:
        if not args.model:
            raise CounterTuneError("--searcher profile needs --model (path or 'exact')")
        model = _load_model(args.model, dataset)
    name = args.name or f"{args.searcher}-search"
    spec = _experiment_spec(args, dataset, args.searcher, model, name)
    rep = harness.simulate(spec)
    files = harness.report([rep], args.out)
    _print_report(rep)
    for path in files:
        print(f"wrote {path}")
    return 0


def _cmd_compare(args) -> int:
    dataset = load_dataset_dir(args.dataset)
    model = _load_model(args.model, dataset)
    profile_rep = harness.simulate(
        _experiment_spec(args, dataset, harness.SEARCHER_PROFILE, model, "profile-search"))
    random_rep = harness.simulate(
        _experiment_spec(args, dataset, harness.SEARCHER_RANDOM, None, "random-search"))
    harness.pair_with_baseline(profile_rep, random_rep)
    files = harness.report([profile_rep, random_rep], args.out)
    _print_report(profile_rep)
    _print_report(random_rep)
    for path in files:
        print(f"wrote {path}")
    return 0


def _cmd_cross_eval(args) -> int:
    dataset = load_dataset_dir(args.dataset)
    ms = _load_model(args.model, dataset)
    rep = harness.cross_evaluate(ms, dataset, repetitions=args.reps,
                                 inner_steps=args.n, outer_iterations=args.i,
                                 seed=args.seed, slack=args.slack,
                                 profiling_overhead=args.overhead,
                                 inst_reaction=_inst_reaction(args))
    files = harness.report([rep.profile_report, rep.random_report], args.out)
    errors_path = files and files[0].replace("summary.csv", "counter_errors.csv")
    harness.write_counter_errors(rep.counter_errors, errors_path)
    print(f"model {rep.model_label} on dataset {rep.dataset_label}")
    for abbr, (mae, rmse) in rep.counter_errors.items():
        print(f"counter {abbr} mae {mae:.6g} rmse {rmse:.6g}")
    _print_report(rep.profile_report)
    _print_report(rep.random_report)
    for path in files + [errors_path]:
        print(f"wrote {path}")
    return 0


def _cmd_inspect(args) -> int:
    dataset = load_dataset_dir(args.dataset)
    rec = dataset.record_for(args.config)
    conf = dataset.space.configurations[args.config]
    pairs = " ".join(f"{name}={value!r}"
                     for name, value in zip(dataset.space.parameter_names, conf.assignment))
    print(f"configuration {args.config}: {pairs}")
    print(f"runtime_us {rec.runtime_us!r}")
    print(f"global_threads {rec.global_threads}")
    well = well_performing_set(dataset, args.slack)
    print(f"well_performing {'yes' if args.config in well else 'no'} "
          f"(slack {args.slack!r}, best {dataset.best_runtime!r})")
    for abbr in dataset.counter_names:
        print(f"counter {abbr} {rec.counters[abbr]!r}")
    b = analyze(rec.counters, dataset.arch, rec.global_threads)
    if b.degenerate_instructions:
        print("note instruction pressure undefined for this record (degenerate counters)")
    for name, value in b.as_dict().items():
        print(f"bottleneck {name} {value!r}")
    for counter, value in react(b, _inst_reaction(args)).items():
        print(f"delta {counter} {value!r}")
    return 0


def _cmd_gen_synth(args) -> int:
    if bool(args.preset) == bool(args.spec):
        raise CounterTuneError("give exactly one of --preset or --spec")
    if args.preset:
        if args.preset not in synth.GENERATOR_PRESETS:
            raise CounterTuneError(f"unknown preset {args.preset!r}, have: "
                                   f"{', '.join(sorted(synth.GENERATOR_PRESETS))}")
        spec = synth.GENERATOR_PRESETS[args.preset]
    else:
        spec = synth.load_generator_spec(args.spec)
    dataset = synth.gen_synthetic(spec, args.out, seed=args.seed)
    well = well_performing_set(dataset, 1.1)
    print(f"generated {len(dataset.space)} configurations "
          f"({len(well)} well performing at slack 1.1) in {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="countertune",
                                     description="Counter-guided tuning space search "
                                                 "and replay simulation")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="fit counter models on a dataset")
    _add_dataset_arg(p)
    p.add_argument("--family", choices=(models.FAMILY_TREE, models.FAMILY_REGRESSION),
                   default=models.FAMILY_TREE)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="model file to write")
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("simulate", help="replay one searcher on a dataset")
    _add_dataset_arg(p)
    p.add_argument("--searcher", choices=(harness.SEARCHER_PROFILE, harness.SEARCHER_RANDOM),
                   required=True)
    p.add_argument("--model", help="model file or 'exact' (profile searcher only)")
    p.add_argument("--name", help="experiment name used in report files")
    _add_experiment_args(p)
    p.add_argument("--out", required=True, help="report directory")
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("compare", help="profile searcher vs the random baseline")
    _add_dataset_arg(p)
    p.add_argument("--model", required=True, help="model file or 'exact'")
    _add_experiment_args(p)
    p.add_argument("--out", required=True, help="report directory")
    p.set_defaults(func=_cmd_compare)

    p = sub.add_parser("cross-eval", help="evaluate a foreign model on a dataset")
    _add_dataset_arg(p)
    p.add_argument("--model", required=True, help="model file trained elsewhere, or 'exact'")
    _add_experiment_args(p)
    p.add_argument("--out", required=True, help="report directory")
    p.set_defaults(func=_cmd_cross_eval)

    p = sub.add_parser("inspect", help="bottlenecks and deltas of one measured configuration")
    _add_dataset_arg(p)
    p.add_argument("--config", type=int, required=True, help="configuration index")
    p.add_argument("--slack", type=float, default=1.1)
    reaction = p.add_mutually_exclusive_group()
    reaction.add_argument("--inst-reaction", type=float, default=DEFAULT_INST_REACTION)
    reaction.add_argument("--instruction-bound", action="store_true")
    p.set_defaults(func=_cmd_inspect)

    p = sub.add_parser("gen-synth", help="generate a synthetic dataset directory")
    p.add_argument("--preset", help=f"one of: {', '.join(sorted(synth.GENERATOR_PRESETS))}")
    p.add_argument("--spec", help="generator spec JSON file")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="dataset directory to write")
    p.set_defaults(func=_cmd_gen_synth)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (CounterTuneError, OSError, ValueError, KeyError) as exc:
        print(f"error: {json.dumps({'message': str(exc)})}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
