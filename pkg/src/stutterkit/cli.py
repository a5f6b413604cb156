"""Operator command suite: curate, split, train, eval, audit-params, compare.

Exit codes: 0 success, 2 invalid input or validation failure, 1 internal
error. Errors are emitted as one JSON record on stderr. One JSON config
file drives an experiment; command-line flags override config values and
the file is snapshotted verbatim into the run directory.
"""

from __future__ import annotations

import dataclasses
import json
import shutil
import sys
from pathlib import Path

import click

from . import corpus, curation, evaluation, frontend, training
from .checkpoint import load_checkpoint, load_pretrained
from .encoder import (
    REFERENCE_TRAINABLE_M,
    EncoderClassifier,
    EncoderConfig,
    FreezeStrategy,
    apply_freeze,
    count_parameters,
)
from .errors import ConfigError, ValidationError

_STRATEGY_ALIASES = {
    "base": FreezeStrategy.BASE,
    "s1": FreezeStrategy.STRATEGY1,
    "strategy1": FreezeStrategy.STRATEGY1,
    "s2": FreezeStrategy.STRATEGY2,
    "strategy2": FreezeStrategy.STRATEGY2,
}

_PATH_KEYS = {
    "annotations",
    "media_root",
    "train_manifest",
    "val_manifest",
    "test_manifest",
    "external_manifest",
    "checkpoint",
    "cache_dir",
    "run_dir",
    "exclusions",
}

_MODEL_KEYS = {"preset", "strategy"} | {
    f.name for f in dataclasses.fields(EncoderConfig)
}


def _section_keys(cls) -> set:
    return {f.name for f in dataclasses.fields(cls)}


def _check_keys(section: str, data: dict, allowed: set) -> None:
    unknown = set(data) - allowed
    if unknown:
        raise ConfigError(f"unknown keys in config section {section!r}: {sorted(unknown)}")


def load_run_config(path) -> dict:
    """Parse and validate the JSON run-config file (unknown keys rejected)."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file is not valid JSON: {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError("config root must be an object with named sections")
    _check_keys("<root>", data, {"curation", "frontend", "model", "training", "paths"})
    noise_keys = _section_keys(curation.NoiseGateConfig)
    cur = dict(data.get("curation", {}))
    _check_keys("curation", cur, _section_keys(curation.CurationConfig))
    if "noise" in cur:
        _check_keys("curation.noise", cur["noise"], noise_keys)
    _check_keys("frontend", data.get("frontend", {}), _section_keys(frontend.FrontendConfig))
    _check_keys("model", data.get("model", {}), _MODEL_KEYS)
    _check_keys("training", data.get("training", {}), _section_keys(training.TrainConfig))
    _check_keys("paths", data.get("paths", {}), _PATH_KEYS)
    return data


def curation_config(data: dict) -> curation.CurationConfig:
    section = dict(data.get("curation", {}))
    noise = curation.NoiseGateConfig(**section.pop("noise", {}))
    exclusions = section.pop("exclusion_manifest", None)
    return curation.CurationConfig(
        noise=noise,
        exclusion_manifest=Path(exclusions) if exclusions else None,
        **section,
    )


def frontend_config(data: dict) -> frontend.FrontendConfig:
    return frontend.FrontendConfig(**data.get("frontend", {}))


def encoder_config(data: dict) -> tuple:
    """Returns (EncoderConfig, strategy string or None) from the model section."""
    section = dict(data.get("model", {}))
    preset = section.pop("preset", "base")
    strategy = section.pop("strategy", None)
    if preset == "base":
        cfg = EncoderConfig.base(**section)
    elif preset == "tiny":
        cfg = EncoderConfig.tiny(**section)
    else:
        raise ConfigError(f"unknown model preset: {preset!r}")
    return cfg, strategy


def training_config(data: dict, seed=None) -> training.TrainConfig:
    section = dict(data.get("training", {}))
    if seed is not None:
        section["seed"] = seed
    if "class_weights" in section and section["class_weights"] is not None:
        section["class_weights"] = tuple(section["class_weights"])
    return training.TrainConfig(**section)


def _resolve_strategy(name) -> FreezeStrategy:
    if name is None:
        return FreezeStrategy.BASE
    key = str(name).lower()
    if key not in _STRATEGY_ALIASES:
        raise ConfigError(
            f"unknown strategy {name!r} (expected one of {sorted(_STRATEGY_ALIASES)})"
        )
    return _STRATEGY_ALIASES[key]


def _fail(exc: Exception, code: int):
    record = {"error": type(exc).__name__, "message": str(exc)}
    click.echo(json.dumps(record), err=True)
    sys.exit(code)


def _guarded(fn):
    import functools

    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except (ValidationError, FileNotFoundError) as exc:
            _fail(exc, 2)
        except click.ClickException:
            raise
        except Exception as exc:  # noqa: BLE001 - boundary of the process
            _fail(exc, 1)

    return wrapper


def _prepare_out(out, no_clobber: bool) -> Path:
    out = Path(out)
    occupied = out.is_file() or (out.is_dir() and any(out.iterdir()))
    if occupied and no_clobber:
        raise ValidationError(f"output target exists and --no-clobber is set: {out}")
    out.mkdir(parents=True, exist_ok=True)
    return out


@click.group()
def main():
    """Disfluency-classification pipeline: curation, splits, training, evaluation."""


@main.command("curate")
@click.option("--annotations", required=True, type=click.Path(), help="Annotation CSV.")
@click.option("--media-root", required=True, type=click.Path(), help="Episode audio root.")
@click.option("--mode", type=click.Choice(["semi-clean", "clean"]), default="semi-clean")
@click.option("--exclusions", type=click.Path(), default=None, help="Exclusion manifest.")
@click.option("--config", "config_path", type=click.Path(), default=None)
@click.option("--out", required=True, type=click.Path())
@click.option("--sample-rate", default=16000, show_default=True)
@click.option("--review-candidates", "review_out", type=click.Path(), default=None,
              help="Write clips flagged for human multi-speaker review here.")
@click.option("--no-clobber", is_flag=True, default=False)
@_guarded
def cmd_curate(annotations, media_root, mode, exclusions, config_path, out, sample_rate,
               review_out, no_clobber):
    """Run the cleaning pipeline and write the curated corpus manifest."""
    data = load_run_config(config_path) if config_path else {}
    cfg = curation_config(data)
    if exclusions is not None:
        cfg = dataclasses.replace(cfg, exclusion_manifest=Path(exclusions))
    if mode == "clean" and cfg.exclusion_manifest is None:
        click.echo("warning: clean mode without an exclusion manifest; "
                   "multi-speaker screening not applied", err=True)
    out = _prepare_out(out, no_clobber)
    catalog = corpus.load_catalog(annotations, media_root, sample_rate=sample_rate)
    for error in catalog.row_errors:
        click.echo(f"warning: row {error.row_number}: {error.message}", err=True)
    curated, report = curation.run_pipeline(
        catalog.clips,
        catalog.annotations,
        cfg,
        mode=mode,
        loader=frontend.load_clip if mode == "clean" else None,
        denoised_dir=out / "denoised" if mode == "clean" else None,
    )
    manifest_path = corpus.write_manifest(
        out / "curated.manifest.jsonl",
        [c.record for c in curated],
        {c.record.clip_id: c.label for c in curated},
    )
    if review_out is not None:
        flagged = curation.review_queue([c.record for c in curated], frontend.load_clip)
        lines = [f"{clip_id}  # bimodality {score:.3f}" for clip_id, score in flagged]
        Path(review_out).write_text("\n".join(lines) + "\n" if lines else "", encoding="utf-8")
        click.echo(f"{len(flagged)} clips queued for multi-speaker review: {review_out}")
    (out / "curation_report.txt").write_text(report.render_text() + "\n", encoding="utf-8")
    with (out / "curation_report.jsonl").open("w", encoding="utf-8") as fh:
        for record in report.to_records():
            fh.write(json.dumps(record) + "\n")
    click.echo(report.render_text())
    click.echo(f"curated manifest: {manifest_path}")


@main.command("split")
@click.option("--manifest", required=True, type=click.Path(), help="Curated corpus manifest.")
@click.option("--split", "split_name", required=True, type=click.Choice(corpus.SPLIT_NAMES))
@click.option("--external", type=click.Path(), default=None, help="External test manifest.")
@click.option("--out", required=True, type=click.Path())
@click.option("--no-clobber", is_flag=True, default=False)
@_guarded
def cmd_split(manifest, split_name, external, out, no_clobber):
    """Build one split configuration and write per-role manifests."""
    out = _prepare_out(out, no_clobber)
    data = corpus.read_manifest(manifest)
    external_data = corpus.read_manifest(external) if external else None
    assignment = corpus.build_split(
        split_name,
        data.clips,
        external_catalog=external_data.clips if external_data else None,
    )
    clips_by_id = {c.clip_id: c for c in data.clips}
    labels = dict(data.labels)
    if external_data is not None:
        clips_by_id.update({c.clip_id: c for c in external_data.clips})
        labels.update(external_data.labels)
    for role, ids in (
        ("train", assignment.train),
        ("validation", assignment.validation),
        ("test", assignment.test),
    ):
        members = [clips_by_id[i] for i in sorted(ids)]
        role_assignment = corpus.SplitAssignment(
            split_name=split_name,
            train=ids if role == "train" else set(),
            validation=ids if role == "validation" else set(),
            test=ids if role == "test" else set(),
            speaker_partition=assignment.speaker_partition,
        )
        path = corpus.write_manifest(
            out / f"{role}.manifest.jsonl", members, labels, role_assignment
        )
        click.echo(f"{role}: {len(ids)} clips -> {path}")
    (out / "speaker_partition.json").write_text(
        json.dumps(assignment.speaker_partition, indent=2, sort_keys=True) + "\n",
        encoding="utf-8",
    )


@main.command("train")
@click.option("--config", "config_path", required=True, type=click.Path())
@click.option("--strategy", default=None, help="base | s1 | s2 (overrides config).")
@click.option("--checkpoint", type=click.Path(), default=None, help="Pretrained encoder archive.")
@click.option("--random-init", is_flag=True, default=False,
              help="Train from random weights instead of a pretrained checkpoint.")
@click.option("--out", "run_dir", required=True, type=click.Path())
@click.option("--seed", type=int, default=None, help="Overrides training.seed.")
@click.option("--no-clobber", is_flag=True, default=False)
@_guarded
def cmd_train(config_path, strategy, checkpoint, random_init, run_dir, seed, no_clobber):
    """Fine-tune the encoder classifier per the config file."""
    data = load_run_config(config_path)
    paths = data.get("paths", {})
    checkpoint = checkpoint or paths.get("checkpoint")
    if checkpoint is None and not random_init:
        raise ValidationError(
            "a pretrained --checkpoint is required (or pass --random-init)"
        )
    for key in ("train_manifest", "val_manifest"):
        if key not in paths:
            raise ValidationError(f"config paths section lacks {key!r}")

    run_dir = _prepare_out(run_dir, no_clobber)
    shutil.copyfile(config_path, run_dir / "config.json")

    enc_cfg, cfg_strategy = encoder_config(data)
    strategy = _resolve_strategy(strategy or cfg_strategy)
    train_cfg = training_config(data, seed=seed)
    fe_cfg = frontend_config(data)
    cache_dir = paths.get("cache_dir")

    model = EncoderClassifier(enc_cfg, seed=train_cfg.seed)
    if checkpoint is not None:
        report = load_pretrained(model, checkpoint)
        click.echo(f"loaded pretrained encoder: {report!r}")
    plan = apply_freeze(model, strategy)
    audit = count_parameters(model, plan)
    click.echo(
        f"strategy {plan.strategy.value}: trainable {audit.trainable:,} "
        f"({audit.trainable / 1e6:.2f} M), frozen {audit.frozen:,}"
    )

    datasets = {}
    for role, key in (("train", "train_manifest"), ("validation", "val_manifest")):
        manifest_data = corpus.read_manifest(paths[key])
        dataset, skipped = frontend.dataset_from_clips(
            manifest_data.clips, manifest_data.labels, fe_cfg, cache_dir=cache_dir
        )
        if skipped:
            raise ValidationError(f"{role}: {len(skipped)} clips failed feature extraction")
        datasets[role] = dataset

    run = training.train(
        model,
        plan,
        datasets["train"],
        datasets["validation"],
        train_cfg,
        run_dir=run_dir,
        split_name=paths.get("train_manifest", ""),
    )
    runtime = training.measure_runtime(run)
    (run_dir / "runtime.txt").write_text(runtime.render_text() + "\n", encoding="utf-8")
    click.echo(runtime.render_text())
    click.echo(
        f"best epoch {run.best_epoch} (val loss "
        f"{run.epochs[run.best_epoch - 1].val_loss:.4f}); "
        f"checkpoint: {run.checkpoint_path}"
    )


@main.command("eval")
@click.option("--run", "run_dir", type=click.Path(), default=None, help="Training run directory.")
@click.option("--checkpoint", type=click.Path(), default=None, help="Fine-tuned checkpoint.")
@click.option("--test", "test_manifest", required=True, type=click.Path())
@click.option("--config", "config_path", type=click.Path(), default=None)
@click.option("--strategy", default=None, help="Label recorded in the report.")
@click.option("--data-version", default="", help="Label recorded in the report (semi-clean | clean).")
@click.option("--out", required=True, type=click.Path())
@click.option("--no-clobber", is_flag=True, default=False)
@_guarded
def cmd_eval(run_dir, checkpoint, test_manifest, config_path, strategy, data_version, out, no_clobber):
    """Evaluate a fine-tuned model on a labeled test manifest."""
    if (run_dir is None) == (checkpoint is None):
        raise ValidationError("pass exactly one of --run or --checkpoint")
    if checkpoint is None:
        checkpoint = Path(run_dir) / "best.ckpt"
    model, metadata = load_checkpoint(checkpoint)
    data = load_run_config(config_path) if config_path else {}
    fe_cfg = frontend_config(data)
    cache_dir = data.get("paths", {}).get("cache_dir")

    manifest_data = corpus.read_manifest(test_manifest)
    dataset, skipped = frontend.dataset_from_clips(
        manifest_data.clips, manifest_data.labels, fe_cfg,
        cache_dir=cache_dir, skip_errors=True,
    )
    for clip_id, reason in skipped:
        click.echo(f"warning: skipped {clip_id}: {reason}", err=True)
    strategy_label = strategy or metadata.get("freeze", {}).get("strategy", "unknown")
    report = evaluation.evaluate(
        model,
        dataset,
        strategy=strategy_label,
        data_version=data_version,
        split_name=str(test_manifest),
        skipped_clips=len(skipped),
    )
    out = _prepare_out(out, no_clobber)
    text_path, record_path = evaluation.write_report_files(report, out)
    click.echo(report.render_text())
    click.echo(f"report: {text_path} / {record_path}")


@main.command("audit-params")
@click.option("--preset", type=click.Choice(["base", "tiny"]), default=None)
@click.option("--config", "config_path", type=click.Path(), default=None)
@click.option("--strategy", default="base", show_default=True)
@click.option("--json", "as_json", is_flag=True, default=False)
@_guarded
def cmd_audit_params(preset, config_path, strategy, as_json):
    """Report total/trainable/frozen parameter counts for a configuration."""
    if config_path is not None:
        data = load_run_config(config_path)
        enc_cfg, cfg_strategy = encoder_config(data)
        strategy = strategy or cfg_strategy
    else:
        enc_cfg = EncoderConfig.base() if preset in (None, "base") else EncoderConfig.tiny()
    plan = apply_freeze(enc_cfg, _resolve_strategy(strategy))
    audit = count_parameters(enc_cfg, plan)
    if as_json:
        click.echo(
            json.dumps(
                {
                    "strategy": plan.strategy.value,
                    "total": audit.total,
                    "trainable": audit.trainable,
                    "frozen": audit.frozen,
                    "per_group": {g: c for g, c, _ in audit.rows},
                    "references_millions": dict(REFERENCE_TRAINABLE_M),
                }
            )
        )
    else:
        click.echo(audit.render_text())


@main.command("compare")
@click.argument("reports", nargs=-1, required=True, type=click.Path())
@click.option("--out", type=click.Path(), default=None, help="Chart-data CSV path.")
@_guarded
def cmd_compare(reports, out):
    """Render a strategy-comparison table from eval report records."""
    loaded = []
    for path in reports:
        for line in Path(path).read_text(encoding="utf-8").splitlines():
            if line.strip():
                loaded.append(evaluation.EvalReport.from_record(json.loads(line)))
    table = evaluation.compare_strategies(loaded)
    click.echo(table.render_text())
    if out:
        rows = table.chart_rows()
        lines = ["class,strategy,data_version,f1"]
        lines += [
            f"{r['class']},{r['strategy']},{r['data_version']},{r['f1']:.6f}" for r in rows
        ]
        Path(out).write_text("\n".join(lines) + "\n", encoding="utf-8")
        click.echo(f"chart data: {out}")


if __name__ == "__main__":
    main()
