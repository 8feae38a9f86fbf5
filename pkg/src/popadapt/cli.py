"""Command-line entry point: validate, fit, eval, synth."""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from pathlib import Path

from . import __version__
from .baselines import MethodId
from .data import DataError, DomainId, load_vocabulary, parse_dataset, serialize_dataset
from .evaluation import (
    aggregates_csv,
    methods_by_target_markdown,
    proportion_sweep_markdown,
    rows_csv,
    run_experiments,
)
from .hierarchy import prepare_hierarchy
from .mapfit import FitError, ModelConfig, fit_map
from .predictor import HierPModel, build_encoding, fit_level_weights, model_to_json
from .synth import default_benchmark_spec, generate, spec_from_json, spec_to_json, truth_to_json
from .data import SplitSpec, split_labelled

EXIT_OK = 0
EXIT_DATA_ERROR = 1
EXIT_USAGE = 2

_CONFIG_KEYS = {
    "beta", "lam", "powell_tol", "powell_max_iters", "line_search_tol",
    "seed", "l2_strength", "squared_divergence", "target_dataset_id",
    "proportion_labelled", "domains",
}


class UsageError(Exception):
    pass


def _sha256(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def _read(path: str) -> str:
    p = Path(path)
    if not p.exists():
        raise UsageError(f"no such file: {path}")
    return p.read_text()


def _load_config(path: str | None, overrides: dict) -> tuple[ModelConfig, dict[str, str]]:
    raw = {}
    if path:
        raw = json.loads(_read(path))
        unknown = set(raw) - _CONFIG_KEYS
        if unknown:
            raise UsageError(f"unknown config keys: {sorted(unknown)}")
    domains = raw.pop("domains", {})
    raw.update({k: v for k, v in overrides.items() if v is not None})
    try:
        return ModelConfig.from_dict(raw), domains
    except (TypeError, ValueError) as exc:
        raise UsageError(str(exc)) from None


def _load_datasets(paths, vocab, domains: dict[str, str]):
    datasets = []
    warnings = []
    for path in paths:
        dataset_id = Path(path).stem
        domain_token = domains.get(dataset_id)
        if domain_token is None:
            raise UsageError(f"no domain configured for dataset {dataset_id!r}")
        try:
            domain = DomainId(domain_token.upper())
        except ValueError:
            raise UsageError(f"unknown domain {domain_token!r} for {dataset_id!r}") from None
        ds, warns = parse_dataset(_read(path), vocab, domain, dataset_id)
        datasets.append(ds)
        warnings.extend(warns)
    return datasets, warnings


def _write_manifest(out_dir: Path, command: str, config: ModelConfig,
                    input_paths, seed: int) -> None:
    digests = {
        str(p): _sha256(Path(p).read_bytes()) for p in sorted(str(x) for x in input_paths)
    }
    config_blob = json.dumps(config.to_dict(), sort_keys=True).encode()
    manifest = {
        "command": command,
        "config_hash": _sha256(config_blob),
        "input_digests": digests,
        "tool_version": __version__,
        "seed": seed,
    }
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")


def cmd_validate(args) -> int:
    vocab = load_vocabulary(_read(args.vocab))
    _, domains = _load_config(args.config, {})
    errors = []
    warnings = []
    for path in args.data:
        dataset_id = Path(path).stem
        domain_token = domains.get(dataset_id, "citizen_science")
        try:
            domain = DomainId(domain_token.upper())
            _, warns = parse_dataset(_read(path), vocab, domain, dataset_id)
            warnings.extend(f"{path}: {w}" for w in warns)
        except DataError as exc:
            errors.append(f"{path}: {exc}")
    report = {"errors": errors, "warnings": warnings}
    print(json.dumps(report, indent=2))
    return EXIT_DATA_ERROR if errors else EXIT_OK


def cmd_fit(args) -> int:
    overrides = {"beta": args.beta, "seed": args.seed,
                 "target_dataset_id": args.target}
    config, domains = _load_config(args.config, overrides)
    if config.target_dataset_id is None:
        raise UsageError("no target dataset configured (config key target_dataset_id or --target)")
    vocab = load_vocabulary(_read(args.vocab))
    datasets, _ = _load_datasets(args.data, vocab, domains)
    ids = [d.dataset_id for d in datasets]
    if config.target_dataset_id not in ids:
        raise UsageError(f"target {config.target_dataset_id!r} not among {ids}")

    target = next(d for d in datasets if d.dataset_id == config.target_dataset_id)
    sources = [d for d in datasets if d.dataset_id != config.target_dataset_id]
    labelled, _heldout = split_labelled(
        target, SplitSpec(config.proportion_labelled, config.seed)
    )
    hierarchy, stats = prepare_hierarchy(sources + [labelled], vocab, config.lam)
    try:
        fitted = fit_map(hierarchy, stats, config)
        encoding = build_encoding(hierarchy, target.dataset_id)
        weights = fit_level_weights(labelled, fitted, encoding, config.l2_strength)
    except FitError as exc:
        print(f"fit failed: {exc}", file=sys.stderr)
        return EXIT_DATA_ERROR
    model = HierPModel(fitted, weights, encoding, target.dataset_id)

    out_path = Path(args.out)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    out_path.write_text(model_to_json(model) + "\n")
    _write_manifest(out_path.parent, "fit", config,
                    [args.vocab, *args.data], config.seed)
    print(f"wrote {out_path}")
    return EXIT_OK


def cmd_eval(args) -> int:
    spec_raw = json.loads(_read(args.spec))
    known = {"targets", "methods", "proportions", "seeds", "config"}
    unknown = set(spec_raw) - known
    if unknown:
        raise UsageError(f"unknown eval spec keys: {sorted(unknown)}")
    try:
        methods = [MethodId(m) for m in spec_raw["methods"]]
    except ValueError as exc:
        raise UsageError(f"bad method name: {exc}") from None
    config_raw = dict(spec_raw.get("config", {}))
    domains = config_raw.pop("domains", {})
    if args.seed is not None:
        config_raw["seed"] = args.seed
    try:
        config = ModelConfig.from_dict(config_raw)
    except (TypeError, ValueError) as exc:
        raise UsageError(str(exc)) from None

    vocab = load_vocabulary(_read(args.vocab))
    datasets, _ = _load_datasets(args.data, vocab, domains)
    table = run_experiments(
        targets=spec_raw["targets"],
        methods=methods,
        proportions=[float(p) for p in spec_raw["proportions"]],
        seeds=[int(s) for s in spec_raw["seeds"]],
        config=config,
        datasets=datasets,
        vocab=vocab,
        jobs=args.jobs,
    )

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "rows.csv").write_text(rows_csv(table))
    (out_dir / "aggregates.csv").write_text(aggregates_csv(table))
    proportions = sorted({float(p) for p in spec_raw["proportions"]})
    if 0.2 in proportions:
        (out_dir / "table1.md").write_text(methods_by_target_markdown(table, 0.2))
    if len(proportions) > 1:
        sweep_methods = [m for m in (MethodId.FEDA_P, MethodId.HIER_P) if m in methods]
        if len(sweep_methods) == 2:
            (out_dir / "table2.md").write_text(
                proportion_sweep_markdown(table, sweep_methods)
            )
    _write_manifest(out_dir, "eval", config,
                    [args.spec, args.vocab, *args.data], config.seed)
    ok = [r for r in table.rows if r.auc is not None]
    print(f"wrote {out_dir} ({len(ok)}/{len(table.rows)} cells ok)")
    return EXIT_OK if ok else EXIT_DATA_ERROR


def cmd_synth(args) -> int:
    if args.spec:
        spec = spec_from_json(_read(args.spec))
    else:
        spec = default_benchmark_spec()
    if args.seed is not None:
        spec = spec_from_json(
            json.dumps({**json.loads(spec_to_json(spec)), "seed": args.seed})
        )
    datasets, truth = generate(spec)
    vocab = spec.vocabulary()

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    for ds in datasets:
        (out_dir / f"{ds.dataset_id}.csv").write_text(serialize_dataset(ds, vocab))
    (out_dir / "vocab.txt").write_text("\n".join(vocab.names) + "\n")
    (out_dir / "truth.json").write_text(truth_to_json(truth) + "\n")
    (out_dir / "spec.json").write_text(spec_to_json(spec) + "\n")
    domains = {ds.dataset_id: ds.domain_id.value.lower() for ds in datasets}
    (out_dir / "domains.json").write_text(json.dumps(domains, indent=2) + "\n")
    print(f"wrote {out_dir}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="popadapt",
        description="Population-aware multi-source hierarchical Bayesian "
                    "domain adaptation for symptom-based infection prediction.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="parse and validate dataset CSVs")
    p.add_argument("data", nargs="+")
    p.add_argument("--vocab", required=True)
    p.add_argument("--config", default=None)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("fit", help="run both model stages for a target dataset")
    p.add_argument("data", nargs="+")
    p.add_argument("--vocab", required=True)
    p.add_argument("--config", default=None)
    p.add_argument("--target", default=None)
    p.add_argument("--beta", type=float, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("eval", help="run an experiment sweep and emit tables")
    p.add_argument("data", nargs="+")
    p.add_argument("--spec", required=True)
    p.add_argument("--vocab", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("synth", help="generate synthetic benchmark datasets")
    p.add_argument("--spec", default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA_ERROR


if __name__ == "__main__":
    sys.exit(main())
