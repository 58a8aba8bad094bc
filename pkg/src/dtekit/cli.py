"""Command-line pipeline driver.

One subcommand per stage plus `run-all`.  Exit codes: 0 ok, 2 config
error, 3 missing artifact, 4 numeric failure, 5 I/O or format error.
`--jobs` is a parallelism hint only and never changes results.
"""

import argparse
import logging
import sys

from .errors import ConfigError, FormatError, MissingArtifactError, NumericError
from . import pipeline

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_MISSING = 3
EXIT_NUMERIC = 4
EXIT_IO = 5

STAGE_COMMANDS = (
    "synth", "features", "train-gmm", "align", "train-dnn1",
    "fit-projection", "assemble", "train-dnn2", "decode", "score", "run-all",
)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dtekit",
        description="Two-stage triphone-embedding acoustic modeling pipeline",
    )
    parser.add_argument("--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, help_text, system_arg=False, dump_arg=False):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True, help="experiment config file")
        p.add_argument("--exp", required=True, help="experiment directory")
        p.add_argument("--seed", type=int, default=None,
                       help="override the config seed")
        p.add_argument("--jobs", type=int, default=1,
                       help="parallelism hint; results never depend on it")
        if system_arg:
            p.add_argument("--system", default=None,
                           help=f"one of {', '.join(pipeline.SYSTEMS)}")
        if dump_arg:
            p.add_argument("--dump-activations", default=None, metavar="PATH",
                           help="also write sampled (label, activation) rows "
                                "in the feature-file format")
        return p

    add("synth", "generate the synthetic corpus")
    add("features", "compute MFCC+deltas and normalize")
    add("train-gmm", "train monophone and tied-state GMM models plus the phone LM")
    add("align", "force-align every split with the tied-state model")
    add("train-dnn1", "train a first-stage style network", system_arg=True)
    add("fit-projection", "fit the PCA or LDA projection", system_arg=True,
        dump_arg=True)
    add("assemble", "materialize stage-two input vectors", system_arg=True)
    add("train-dnn2", "train the second-stage network", system_arg=True)
    add("decode", "tune on dev and decode the test split", system_arg=True)
    add("score", "score one system and write its report", system_arg=True)
    run_p = add("run-all", "run the full chain for every preset system")
    run_p.add_argument("--systems", default=",".join(pipeline.SYSTEMS),
                       help="comma-separated subset of systems to run")
    return parser


def _check_jobs(args):
    if args.jobs < 1:
        raise ConfigError("--jobs must be >= 1")


def _need_system(args, default=None):
    system = getattr(args, "system", None) or default
    if system is None:
        raise ConfigError(f"{args.command} requires --system (one of {pipeline.SYSTEMS})")
    if system not in pipeline.SYSTEMS:
        raise ConfigError(f"unknown system {system!r}; expected one of {pipeline.SYSTEMS}")
    return system


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    _check_jobs(args)
    cfg = pipeline.load_experiment_config(args.config, seed_override=args.seed)
    exp = pipeline.Experiment(cfg, args.exp)

    if args.command == "synth":
        pipeline.stage_synth(exp)
    elif args.command == "features":
        pipeline.stage_features(exp)
    elif args.command == "train-gmm":
        pipeline.stage_train_gmm(exp)
    elif args.command == "align":
        pipeline.stage_align(exp)
    elif args.command == "train-dnn1":
        system = _need_system(args, default="hmm-dnn")
        if system not in ("hmm-dnn", "hmm-dnn-w", "hmm-dnn-w+d"):
            raise ConfigError("train-dnn1 takes a first-stage system "
                              "(hmm-dnn, hmm-dnn-w, hmm-dnn-w+d)")
        pipeline.stage_train_dnn1(exp, system)
    elif args.command == "fit-projection":
        pipeline.stage_fit_projection(exp, _need_system(args, default="dte-pca"),
                                      dump_activations=args.dump_activations)
    elif args.command == "assemble":
        pipeline.stage_assemble(exp, _need_system(args, default="dte-pca"))
    elif args.command == "train-dnn2":
        pipeline.stage_train_dnn2(exp, _need_system(args, default="dte-pca"))
    elif args.command == "decode":
        pipeline.stage_decode(exp, _need_system(args))
    elif args.command == "score":
        row = pipeline.stage_score(exp, _need_system(args))
        print(f"{row['system']}: phone_acc={row['phone_acc']:.4f} "
              f"rec_acc={row['rec_acc']:.4f}")
    elif args.command == "run-all":
        systems = [s.strip() for s in args.systems.split(",") if s.strip()]
        for system in systems:
            if system not in pipeline.SYSTEMS:
                raise ConfigError(f"unknown system {system!r} in --systems")
        rows = pipeline.run_all(exp, systems=systems)
        for row in rows:
            print(f"{row['system']}: phone_acc={row['phone_acc']:.4f} "
                  f"rec_acc={row['rec_acc']:.4f}")
    return EXIT_OK


def main(argv=None) -> int:
    try:
        return run(argv)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except MissingArtifactError as exc:
        print(f"missing artifact: {exc}", file=sys.stderr)
        return EXIT_MISSING
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (FormatError, OSError) as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
