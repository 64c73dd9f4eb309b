"""Command-line front end for the experiment grid.

Subcommands: train, eval, interpret, zeroshot, build-vocab,
validate-data. Every flag mirrors a config-file key (INI-style
sections, flat keys; flags win over the file). All randomness flows
from the single resolved seed, and every command writes a run manifest
with content hashes of its inputs; wall-clock metadata goes to a
separate file so reports stay byte-identical across reruns.
"""

from __future__ import annotations

import argparse
import configparser
import hashlib
import json
import sys
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import concept as concept_mod
from . import linear_head as head_mod
from .datastore import (
    EmbeddingDataset,
    concatenate,
    default_names_path,
    load_dataset,
    load_vocabulary,
    write_vocabulary,
)
from .interpret import (
    build_contribution_report,
    concept_report,
    project_directions,
    rank_vocabulary,
    top_activating_samples,
    write_concept_stats_csv,
    write_delta_mu_csv,
    write_ranking_csv,
    write_top_samples_csv,
)
from .linear_head import MODE_ORTHOGONAL, MODE_PROBE, forward
from .metrics import evaluate_per_generator, optimal_balanced_threshold, write_eval_csv, write_eval_summary
from .numerics import sigmoid
from .zeroshot import (
    build_antonym_vocabulary,
    default_pairs_path,
    load_antonym_entries,
    load_prompt_pairs,
    select_best_prompt,
    zero_shot_scores,
)

MODEL_KINDS = (MODE_ORTHOGONAL, MODE_PROBE, "concept")


def _load_config_file(path: str) -> dict[str, str]:
    parser = configparser.ConfigParser()
    read = parser.read(path)
    if not read:
        raise ValueError(f"missing config file: {path}")
    settings: dict[str, str] = {}
    for section in parser.sections():
        for key, value in parser.items(section):
            if key in settings:
                raise ValueError(f"duplicate config key {key!r} (sections are organizational only)")
            settings[key] = value
    return settings


def _resolve_settings(args: argparse.Namespace, flag_keys: dict[str, str]) -> dict[str, str]:
    """Config file first, then any flag that was actually given."""
    settings: dict[str, str] = {}
    if getattr(args, "config", None):
        settings.update(_load_config_file(args.config))
    for attr, key in flag_keys.items():
        value = getattr(args, attr, None)
        if value is None:
            continue
        if isinstance(value, list):
            settings[key] = ",".join(str(v) for v in value)
        else:
            settings[key] = str(value)
    return settings


def _dataset_paths(settings: dict[str, str]) -> list[Path]:
    raw = settings.get("dataset")
    if not raw:
        raise ValueError("no dataset given (flag --dataset or config key 'dataset')")
    return [Path(part.strip()) for part in raw.split(",") if part.strip()]


def _require(settings: dict[str, str], key: str) -> str:
    if key not in settings or not settings[key]:
        raise ValueError(f"missing required setting {key!r} (flag --{key.replace('_', '-')})")
    return settings[key]


def _sha256_file(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _dataset_input_files(manifest_path: Path) -> list[Path]:
    files = [manifest_path]
    manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    base = manifest_path.parent
    for key in ("embeddings_hidden_file", "embeddings_joint_file", "projection_file"):
        if manifest.get(key):
            files.append(base / manifest[key])
    return files


def _write_run_files(
    out_dir: Path,
    command: str,
    settings: dict[str, str],
    input_files: list[Path],
    outputs: list[str],
) -> None:
    manifest = {
        "command": command,
        "settings": {k: v for k, v in sorted(settings.items()) if k != "out"},
        "inputs": {str(p): _sha256_file(p) for p in sorted(set(input_files))},
        "outputs": sorted(outputs),
    }
    (out_dir / "run_manifest.json").write_text(
        json.dumps(manifest, indent=1, sort_keys=True) + "\n", encoding="utf-8"
    )
    info = {"completed_at": datetime.now(timezone.utc).isoformat()}
    (out_dir / "run_info.json").write_text(json.dumps(info, indent=1) + "\n", encoding="utf-8")


def _load_datasets(settings: dict[str, str]) -> tuple[EmbeddingDataset, list[Path]]:
    paths = _dataset_paths(settings)
    datasets = [load_dataset(p) for p in paths]
    input_files = [f for p in paths for f in _dataset_input_files(p)]
    return concatenate(datasets), input_files


def _train_config(settings: dict[str, str]) -> head_mod.TrainConfig:
    cfg = head_mod.TrainConfig()
    cfg.seed = int(settings.get("seed", cfg.seed))
    cfg.k = int(settings.get("k", cfg.k))
    cfg.ortho_weight = float(settings.get("lambda", cfg.ortho_weight))
    cfg.label_smoothing = float(settings.get("label_smoothing", cfg.label_smoothing))
    cfg.learning_rate = float(settings.get("learning_rate", cfg.learning_rate))
    cfg.weight_decay = float(settings.get("weight_decay", cfg.weight_decay))
    cfg.batch_size = int(settings.get("batch_size", cfg.batch_size))
    cfg.max_epochs = int(settings.get("max_epochs", cfg.max_epochs))
    cfg.patience = int(settings.get("patience", cfg.patience))
    return cfg


def _concept_config(settings: dict[str, str]) -> concept_mod.ConceptTrainConfig:
    cfg = concept_mod.ConceptTrainConfig()
    cfg.seed = int(settings.get("seed", cfg.seed))
    cfg.learning_rate = float(settings.get("learning_rate", cfg.learning_rate))
    cfg.weight_decay = float(settings.get("weight_decay", cfg.weight_decay))
    cfg.batch_size = int(settings.get("batch_size", cfg.batch_size))
    cfg.max_epochs = int(settings.get("max_epochs", cfg.max_epochs))
    cfg.patience = int(settings.get("patience", cfg.patience))
    cfg.val_every = int(settings.get("val_every", cfg.val_every))
    cfg.kl_weight = float(settings.get("kl_weight", cfg.kl_weight))
    cfg.prior_activation = float(settings.get("prior_activation", cfg.prior_activation))
    cfg.temperature = float(settings.get("temperature", cfg.temperature))
    return cfg


def cmd_train(settings: dict[str, str]) -> int:
    out_dir = Path(_require(settings, "out"))
    out_dir.mkdir(parents=True, exist_ok=True)
    dataset, input_files = _load_datasets(settings)
    kind = settings.get("model_kind", MODE_ORTHOGONAL)
    if kind not in MODEL_KINDS:
        raise ValueError(f"unknown model kind {kind!r}, expected one of {MODEL_KINDS}")
    outputs: list[str] = []
    if kind == "concept":
        vocab_path = Path(_require(settings, "vocab"))
        vocabulary = load_vocabulary(vocab_path)
        input_files = input_files + [vocab_path, default_names_path(vocab_path)]
        result = concept_mod.train_concept(dataset, vocabulary, _concept_config(settings))
        concept_mod.save_checkpoint(result, out_dir / "checkpoint", dataset_name=dataset.name)
        concept_mod.write_train_log(result.log, out_dir / "train_log.csv")
        outputs += ["checkpoint", "train_log.csv"]
    else:
        sweep = settings.get("k_sweep")
        ks = [int(v) for v in sweep.split(",")] if sweep else [None]
        for k in ks:
            cfg = _train_config(settings)
            if k is not None:
                cfg.k = k
            sub = out_dir / f"k{k}" if k is not None else out_dir
            result = head_mod.train(dataset, cfg, mode=kind)
            head_mod.save_checkpoint(result, sub / "checkpoint", dataset_name=dataset.name)
            head_mod.write_train_log(result.log, sub / "train_log.csv")
            prefix = f"k{k}/" if k is not None else ""
            outputs += [f"{prefix}checkpoint", f"{prefix}train_log.csv"]
    _write_run_files(out_dir, "train", settings, input_files, outputs)
    print(f"wrote {', '.join(outputs)} to {out_dir}")
    return 0


def _load_any_checkpoint(ckpt_dir: Path):
    meta = json.loads((ckpt_dir / "meta.json").read_text(encoding="utf-8"))
    if meta["model_kind"] == "concept":
        return concept_mod.load_checkpoint(ckpt_dir)
    return head_mod.load_checkpoint(ckpt_dir)


def _checkpoint_files(ckpt_dir: Path) -> list[Path]:
    return sorted(p for p in ckpt_dir.iterdir() if p.is_file())


def _scores_for_checkpoint(
    model, meta: dict, view: EmbeddingDataset, settings: dict[str, str]
) -> tuple[np.ndarray, list[Path]]:
    """Probability scores plus any extra input files consulted."""
    if meta["model_kind"] == "concept":
        vocab_path = Path(_require(settings, "vocab"))
        vocabulary = load_vocabulary(vocab_path)
        if model.vocabulary_sha256 and vocabulary.sha256() != model.vocabulary_sha256:
            raise ValueError(
                f"vocabulary {vocab_path} does not match the checkpoint "
                f"(trained with {model.vocabulary_name!r})"
            )
        logits, _, _ = concept_mod.concept_forward(model, view.joint.astype(np.float64), vocabulary)
        return sigmoid(logits), [vocab_path, default_names_path(vocab_path)]
    inputs = view.hidden if meta["model_kind"] == MODE_ORTHOGONAL else view.joint
    _, logits = forward(model, inputs.astype(np.float64))
    return sigmoid(logits), []


def cmd_eval(settings: dict[str, str]) -> int:
    out_dir = Path(_require(settings, "out"))
    out_dir.mkdir(parents=True, exist_ok=True)
    ckpt_dir = Path(_require(settings, "checkpoint"))
    model, meta = _load_any_checkpoint(ckpt_dir)
    dataset, input_files = _load_datasets(settings)
    split = settings.get("split", "test")
    view = dataset.select(split)
    scores, extra_inputs = _scores_for_checkpoint(model, meta, view, settings)
    report = evaluate_per_generator(scores, view.records)
    write_eval_csv(report, out_dir / "eval_report.csv")
    write_eval_summary(
        report,
        out_dir / "eval_summary.json",
        train_dataset=meta.get("dataset_name", ""),
        test_dataset=dataset.name,
        model_kind=meta["model_kind"],
    )
    _write_run_files(
        out_dir,
        "eval",
        settings,
        input_files + extra_inputs + _checkpoint_files(ckpt_dir),
        ["eval_report.csv", "eval_summary.json"],
    )
    print(f"mAP {report.map:.4f} over {len(report.rows)} generator(s); reports in {out_dir}")
    return 0


def cmd_interpret(settings: dict[str, str]) -> int:
    out_dir = Path(_require(settings, "out"))
    out_dir.mkdir(parents=True, exist_ok=True)
    ckpt_dir = Path(_require(settings, "checkpoint"))
    model, meta = _load_any_checkpoint(ckpt_dir)
    dataset, input_files = _load_datasets(settings)
    split = settings.get("split", "test")
    view = dataset.select(split)
    outputs: list[str] = []
    extra_inputs: list[Path] = []

    if meta["model_kind"] == "concept":
        vocab_path = Path(_require(settings, "vocab"))
        vocabulary = load_vocabulary(vocab_path)
        if model.vocabulary_sha256 and vocabulary.sha256() != model.vocabulary_sha256:
            raise ValueError(f"vocabulary {vocab_path} does not match the checkpoint")
        stats = concept_report(model, view, vocabulary)
        write_concept_stats_csv(stats, out_dir / "concept_stats.csv")
        outputs.append("concept_stats.csv")
        extra_inputs += [vocab_path, default_names_path(vocab_path)]
    elif meta["model_kind"] == MODE_ORTHOGONAL:
        inputs = view.hidden.astype(np.float64)
        report = build_contribution_report(model, inputs, view.labels)
        write_delta_mu_csv(report, out_dir / "delta_mu.csv")
        outputs.append("delta_mu.csv")
        activations, _ = forward(model, inputs)
        count = min(int(settings.get("samples", 5)), len(view))
        ids = [r.id for r in view.records]
        sample_rows = [
            (j, *top_activating_samples(activations, ids, j, count)) for j in range(model.k)
        ]
        write_top_samples_csv(sample_rows, out_dir / "top_samples.csv")
        outputs.append("top_samples.csv")
        if settings.get("vocab"):
            if dataset.projection is None:
                raise ValueError(
                    "dataset has no projection matrix (manifest field 'projection_file'); "
                    "cannot rank vocabularies against the head"
                )
            directions = project_directions(model.feature_weights, dataset.projection.astype(np.float64))
            top = int(settings.get("top", 5))
            for vocab_path_str in settings["vocab"].split(","):
                vocab_path = Path(vocab_path_str.strip())
                vocabulary = load_vocabulary(vocab_path)
                ranking = rank_vocabulary(directions, vocabulary, top=top)
                name = f"ranking_{vocabulary.name}.csv"
                write_ranking_csv(ranking, out_dir / name)
                outputs.append(name)
                extra_inputs += [vocab_path, default_names_path(vocab_path)]
    else:
        raise ValueError("interpretation needs an orthogonal_head or concept checkpoint")

    _write_run_files(
        out_dir, "interpret", settings, input_files + extra_inputs + _checkpoint_files(ckpt_dir), outputs
    )
    print(f"wrote {', '.join(outputs)} to {out_dir}")
    return 0


def cmd_zeroshot(settings: dict[str, str]) -> int:
    out_dir = Path(_require(settings, "out"))
    out_dir.mkdir(parents=True, exist_ok=True)
    prompts_path = Path(_require(settings, "prompts"))
    pairs = load_prompt_pairs(prompts_path)
    dataset, input_files = _load_datasets(settings)
    train_view = dataset.select("train")
    test_view = dataset.select("test")
    pair, train_map = select_best_prompt(pairs, train_view)
    train_scores = zero_shot_scores(train_view.joint.astype(np.float64), pair)
    threshold, train_bacc = optimal_balanced_threshold(train_scores, train_view.labels)
    test_scores = zero_shot_scores(test_view.joint.astype(np.float64), pair)
    report = evaluate_per_generator(test_scores, test_view.records, threshold=threshold)
    write_eval_csv(report, out_dir / "zeroshot_report.csv")
    summary = {
        "selected_pair": pair.name,
        "train_map": round(train_map, 6),
        "train_balanced_accuracy": round(train_bacc, 6),
        "threshold": round(threshold, 6),
        "test_map": round(report.map, 6),
        "test_dataset": dataset.name,
    }
    (out_dir / "zeroshot_summary.json").write_text(
        json.dumps(summary, indent=1, sort_keys=True) + "\n", encoding="utf-8"
    )
    _write_run_files(
        out_dir,
        "zeroshot",
        settings,
        input_files + [prompts_path, default_pairs_path(prompts_path)],
        ["zeroshot_report.csv", "zeroshot_summary.json"],
    )
    print(f"selected {pair.name!r}; test mAP {report.map:.4f}; reports in {out_dir}")
    return 0


def cmd_build_vocab(settings: dict[str, str]) -> int:
    out_path = Path(_require(settings, "out"))
    pairs_path = Path(_require(settings, "pairs"))
    entries = load_antonym_entries(pairs_path)
    vocabulary = build_antonym_vocabulary(entries, name=settings.get("name", out_path.stem))
    out_path.parent.mkdir(parents=True, exist_ok=True)
    write_vocabulary(vocabulary, out_path)
    print(f"wrote {len(vocabulary)} antonym directions to {out_path}")
    return 0


def cmd_validate_data(settings: dict[str, str]) -> int:
    for path in _dataset_paths(settings):
        dataset = load_dataset(path)
        splits = {s: sum(1 for r in dataset.records if r.split == s) for s in ("train", "val", "test")}
        print(
            f"{dataset.name}: {len(dataset)} records ok, d={dataset.d}, p={dataset.p}, "
            f"generators={dataset.generator_tags()}, splits={splits}, "
            f"projection={'yes' if dataset.projection is not None else 'no'}"
        )
    return 0


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="INI config file; flags override its keys")
    parser.add_argument("--dataset", action="append", help="dataset manifest path (repeatable)")
    parser.add_argument("--out", help="output directory (or file for build-vocab)")
    parser.add_argument("--seed", type=int, help="seed for all randomness")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sidprobe", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="train a detector head or concept model")
    _add_common(p_train)
    p_train.add_argument("--model-kind", dest="model_kind", choices=MODEL_KINDS)
    p_train.add_argument("--k", type=int, help="feature dimension of the orthogonal head")
    p_train.add_argument("--lambda", dest="lam", type=float, help="orthogonality penalty weight")
    p_train.add_argument("--vocab", help="vocabulary tensor path (concept models)")
    p_train.add_argument("--k-sweep", dest="k_sweep", help="comma-separated k values to sweep")
    p_train.set_defaults(func=cmd_train, flag_keys={
        "dataset": "dataset", "out": "out", "seed": "seed", "model_kind": "model_kind",
        "k": "k", "lam": "lambda", "vocab": "vocab", "k_sweep": "k_sweep",
    })

    p_eval = sub.add_parser("eval", help="evaluate a checkpoint on a dataset split")
    _add_common(p_eval)
    p_eval.add_argument("--checkpoint", help="checkpoint directory")
    p_eval.add_argument("--vocab", help="vocabulary tensor path (concept checkpoints)")
    p_eval.add_argument("--split", choices=("train", "val", "test"))
    p_eval.set_defaults(func=cmd_eval, flag_keys={
        "dataset": "dataset", "out": "out", "seed": "seed",
        "checkpoint": "checkpoint", "vocab": "vocab", "split": "split",
    })

    p_int = sub.add_parser("interpret", help="attribution and vocabulary-ranking reports")
    _add_common(p_int)
    p_int.add_argument("--checkpoint", help="checkpoint directory")
    p_int.add_argument("--vocab", action="append", help="vocabulary tensor path (repeatable)")
    p_int.add_argument("--split", choices=("train", "val", "test"))
    p_int.add_argument("--top", type=int, help="terms per direction in rankings")
    p_int.add_argument("--samples", type=int, help="ids per end in the top-sample lists")
    p_int.set_defaults(func=cmd_interpret, flag_keys={
        "dataset": "dataset", "out": "out", "seed": "seed", "checkpoint": "checkpoint",
        "vocab": "vocab", "split": "split", "top": "top", "samples": "samples",
    })

    p_zs = sub.add_parser("zeroshot", help="prompt-pair selection and zero-shot evaluation")
    _add_common(p_zs)
    p_zs.add_argument("--prompts", help="prompt-pair tensor path")
    p_zs.set_defaults(func=cmd_zeroshot, flag_keys={
        "dataset": "dataset", "out": "out", "seed": "seed", "prompts": "prompts",
    })

    p_bv = sub.add_parser("build-vocab", help="antonym pole embeddings -> direction vocabulary")
    p_bv.add_argument("--config", help="INI config file; flags override its keys")
    p_bv.add_argument("--pairs", help="antonym pole tensor path")
    p_bv.add_argument("--out", help="output vocabulary tensor path")
    p_bv.add_argument("--name", help="vocabulary name")
    p_bv.set_defaults(func=cmd_build_vocab, flag_keys={
        "pairs": "pairs", "out": "out", "name": "name",
    })

    p_vd = sub.add_parser("validate-data", help="load and validate dataset files")
    p_vd.add_argument("--config", help="INI config file; flags override its keys")
    p_vd.add_argument("--dataset", action="append", help="dataset manifest path (repeatable)")
    p_vd.set_defaults(func=cmd_validate_data, flag_keys={"dataset": "dataset"})

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        settings = _resolve_settings(args, args.flag_keys)
        return args.func(settings)
    except Exception as exc:  # every module error surfaces as a one-line cause
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
