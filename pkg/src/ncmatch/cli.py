"""Command-line entry point.

Subcommands::

    ncmatch generate    --config C [--seed S] [--out DIR]
    ncmatch pairs       --config C [--seed S] [--out DIR]
    ncmatch train       --config C [--seed S] [--out DIR]
    ncmatch bound-check --config C [--seed S] [--out DIR]
    ncmatch sweep       --config C [--seed S] [--out DIR] [--jobs N]
    ncmatch baselines   --config C [--seed S] [--out DIR] [--jobs N]

Every subcommand is driven by the same TOML experiment config; ``--seed``
sets the master seed (default 0) and ``--out`` overrides the configured
output directory.  Progress goes to standard error; machine-readable output
goes to files.  The one stdout consumer is ``bound-check``, which prints a
human-readable verdict table.  Exit codes: 0 success, 2 configuration or
argument error, 3 numeric failure, 4 I/O or data-format error.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .bounds import format_verdict_table, second_moment, verify_bound
from .errors import (
    ConfigError,
    DataFormatError,
    InvalidArgumentError,
    NcmatchError,
    NotFoundError,
    NumericFailureError,
)
from .harness import (
    ExperimentConfig,
    RunTask,
    build_scm,
    derive_seed,
    execute_task,
    load_config,
    rows_to_csv_text,
    run_baselines,
    run_sweep,
    stratified_training_set,
    resolve_train_config,
)
from .models import train as train_model
from .models import write_model_csv
from .pairs import corrupt_pairs, generate_cf_pairs, random_pairing, write_pairs_csv
from .scm import generate_dataset, generate_mixture, save_scm, write_dataset_csv
from .subspace import estimate_subspace, write_estimate_csv


def _log(message: str) -> None:
    print(message, file=sys.stderr)


def _effective_epsilons(config: ExperimentConfig) -> tuple[float, ...]:
    if config.sweep.axis == "epsilon":
        return tuple(float(v) for v in config.sweep.values)
    return config.pairs.epsilons


def _out_dir(config: ExperimentConfig, args: argparse.Namespace) -> Path:
    directory = Path(args.out) if args.out else Path(config.output.directory)
    directory.mkdir(parents=True, exist_ok=True)
    return directory


def _cmd_generate(args: argparse.Namespace) -> int:
    config = load_config(args.config)
    out = _out_dir(config, args)
    scm = build_scm(config, derive_seed(args.seed, "scm", 0))
    save_scm(scm, out / "scm.toml")
    train_set = stratified_training_set(
        scm, config.data.n_train, derive_seed(args.seed, "train-data", 0)
    )
    eval_in = generate_mixture(
        scm, config.data.n_indomain_test, derive_seed(args.seed, "indomain-eval", 0)
    )
    eval_test = generate_dataset(
        scm,
        config.scm.test_domain,
        config.data.n_test,
        derive_seed(args.seed, "test-data", 0),
    )
    write_dataset_csv(train_set, out / "train.csv")
    write_dataset_csv(eval_in, out / "indomain_eval.csv")
    write_dataset_csv(eval_test, out / "test.csv")
    _log(
        f"generate: wrote scm.toml, train.csv ({train_set.n} rows), "
        f"indomain_eval.csv ({eval_in.n} rows), test.csv ({eval_test.n} rows) "
        f"to {out}"
    )
    return 0


def _make_pairs(config: ExperimentConfig, master_seed: int, k: int):
    scm = build_scm(config, derive_seed(master_seed, "scm", 0))
    if config.pairs.pairing == "oracle":
        clean = generate_cf_pairs(
            scm,
            config.pair_source,
            config.pair_target,
            k,
            derive_seed(master_seed, "pairs", 0),
        )
    else:
        train_set = stratified_training_set(
            scm, config.data.n_train, derive_seed(master_seed, "train-data", 0)
        )
        clean = random_pairing(train_set, k, derive_seed(master_seed, "pairs", 0))
    return scm, clean


def _cmd_pairs(args: argparse.Namespace) -> int:
    config = load_config(args.config)
    out = _out_dir(config, args)
    _, clean = _make_pairs(config, args.seed, config.pairs.k)
    write_pairs_csv(clean, out / "pairs_clean.csv")
    written = ["pairs_clean.csv"]
    for j, eps in enumerate(_effective_epsilons(config)):
        if eps == 0.0:
            continue
        noisy = corrupt_pairs(clean, eps, derive_seed(args.seed, "pair-noise", 0))
        name = f"pairs_noisy_{j}.csv"
        write_pairs_csv(noisy, out / name)
        written.append(name)
    _log(
        f"pairs: mode={config.pairs.pairing}, k={clean.k}; wrote "
        f"{', '.join(written)} to {out} (corruption level recorded in each "
        f"sidecar document)"
    )
    return 0


def _single_task(config: ExperimentConfig, master_seed: int, seed_index: int, eps: float) -> RunTask:
    return RunTask(
        kind="run",
        config=config,
        master_seed=master_seed,
        seed_index=seed_index,
        sweep_value=None,
        k=config.pairs.k,
        r=config.model.r,
        epsilon=eps,
    )


def _cmd_train(args: argparse.Namespace) -> int:
    config = load_config(args.config)
    out = _out_dir(config, args)
    epsilons = _effective_epsilons(config)
    eps = epsilons[0] if epsilons else 0.0
    scm, clean = _make_pairs(config, args.seed, config.pairs.k)
    noisy = corrupt_pairs(clean, eps, derive_seed(args.seed, "pair-noise", 0))
    estimate = estimate_subspace(noisy.delta, config.model.r)
    train_set = stratified_training_set(
        scm, config.data.n_train, derive_seed(args.seed, "train-data", 0)
    )
    model = train_model(
        train_set,
        estimate,
        resolve_train_config(config.model, train_set.n, derive_seed(args.seed, "train", 0)),
        config.model.loss_kind,
    )
    write_model_csv(model, out / "model.csv")
    write_estimate_csv(estimate, out / "estimate.csv")
    row = execute_task(_single_task(config, args.seed, 0, eps))
    (out / "metrics.csv").write_text(rows_to_csv_text([row]), encoding="utf-8")
    _log(
        f"train: k={config.pairs.k} r={config.model.r} epsilon={eps} "
        f"loss={config.model.loss_kind}; final training loss "
        f"{model.train_loss:.6f}; test accuracy {row['test_acc']:.4f}; wrote "
        f"model.csv, estimate.csv, metrics.csv to {out}"
    )
    return 0


def _cmd_bound_check(args: argparse.Namespace) -> int:
    config = load_config(args.config)
    out = _out_dir(config, args)
    epsilons = _effective_epsilons(config) or (0.0,)
    reports = []
    for eps in epsilons:
        for i in range(config.sweep.num_seeds):
            scm = build_scm(config, derive_seed(args.seed, "scm", i))
            train_set = stratified_training_set(
                scm, config.data.n_train, derive_seed(args.seed, "train-data", i)
            )
            eval_in = generate_mixture(
                scm,
                config.data.n_indomain_test,
                derive_seed(args.seed, "indomain-eval", i),
            )
            eval_test = generate_dataset(
                scm,
                config.scm.test_domain,
                config.data.n_test,
                derive_seed(args.seed, "test-data", i),
            )
            if config.pairs.pairing == "oracle":
                clean = generate_cf_pairs(
                    scm,
                    config.pair_source,
                    config.pair_target,
                    config.pairs.k,
                    derive_seed(args.seed, "pairs", i),
                )
            else:
                clean = random_pairing(
                    train_set, config.pairs.k, derive_seed(args.seed, "pairs", i)
                )
            noisy = corrupt_pairs(clean, eps, derive_seed(args.seed, "pair-noise", i))
            estimate = estimate_subspace(noisy.delta, config.model.r)
            model = train_model(
                train_set,
                estimate,
                resolve_train_config(
                    config.model, train_set.n, derive_seed(args.seed, "train", i)
                ),
                config.model.loss_kind,
            )
            sm = second_moment(
                scm,
                config.scm.test_domain,
                config.bounds.mc_samples,
                derive_seed(args.seed, "second-moment", i),
            )
            oracle_pairing = config.pairs.pairing == "oracle"
            report = verify_bound(
                model,
                estimate,
                sm,
                eval_in,
                eval_test,
                clean_pairs=clean if oracle_pairing else None,
                noisy_pairs=noisy if oracle_pairing else None,
            )
            reports.append(report)
            _log(
                f"bound-check: epsilon={eps} seed={i} "
                f"holds={report.holds['theorem']}"
            )
    jsonl = "\n".join(rep.to_json_record() for rep in reports) + "\n"
    (out / "bound_reports.jsonl").write_text(jsonl, encoding="utf-8")
    print(format_verdict_table(reports))
    failed = sum(1 for rep in reports if not rep.holds["theorem"])
    _log(
        f"bound-check: {len(reports) - failed}/{len(reports)} theorem-level "
        f"verdicts hold; reports in {out / 'bound_reports.jsonl'}"
    )
    return 0


def _cmd_sweep(args: argparse.Namespace) -> int:
    config = load_config(args.config)
    result = run_sweep(
        config,
        master_seed=args.seed,
        jobs=args.jobs,
        out_dir=args.out,
        verbose=True,
    )
    _log(f"sweep: wrote {result.rows_path} and {result.summary_path}")
    return 0


def _cmd_baselines(args: argparse.Namespace) -> int:
    config = load_config(args.config)
    result = run_baselines(
        config,
        master_seed=args.seed,
        jobs=args.jobs,
        out_dir=args.out,
        verbose=True,
    )
    _log(f"baselines: wrote {result.rows_path} and {result.summary_path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ncmatch",
        description=(
            "Constrained linear models that remove an estimated spurious "
            "subspace from noisy counterfactual pairs: data generation, "
            "training, bound verification, and sweeps."
        ),
    )
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="experiment TOML file")
    common.add_argument(
        "--seed", type=int, default=0, help="master seed (default 0)"
    )
    common.add_argument(
        "--out", default=None, help="output directory (default from config)"
    )
    parallel = argparse.ArgumentParser(add_help=False)
    parallel.add_argument(
        "--jobs", type=int, default=1, help="worker processes (default 1)"
    )
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser(
        "generate", parents=[common], help="write the sampled model and datasets"
    ).set_defaults(func=_cmd_generate)
    sub.add_parser(
        "pairs", parents=[common], help="write clean and corrupted pair CSVs"
    ).set_defaults(func=_cmd_pairs)
    sub.add_parser(
        "train", parents=[common], help="run one constrained fit and save it"
    ).set_defaults(func=_cmd_train)
    sub.add_parser(
        "bound-check",
        parents=[common],
        help="verify the risk bounds and print a verdict table",
    ).set_defaults(func=_cmd_bound_check)
    sub.add_parser(
        "sweep", parents=[common, parallel], help="run the configured sweep grid"
    ).set_defaults(func=_cmd_sweep)
    sub.add_parser(
        "baselines",
        parents=[common, parallel],
        help="run unconstrained and ceiling baselines",
    ).set_defaults(func=_cmd_baselines)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, InvalidArgumentError, NotFoundError) as exc:
        _log(f"error: {exc}")
        return 2
    except NumericFailureError as exc:
        _log(f"numeric failure: {exc}")
        return 3
    except (DataFormatError, OSError) as exc:
        _log(f"i/o error: {exc}")
        return 4
    except NcmatchError as exc:  # any future taxonomy growth: argument-class
        _log(f"error: {exc}")
        return 2


if __name__ == "__main__":
    sys.exit(main())
