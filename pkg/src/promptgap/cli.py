"""Command-line surface: measure, filter, sample, vendi, synthesize, dedup."""

from __future__ import annotations

import functools
import json
import shutil
import sys
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import click
import numpy as np

from .answers import build_distributions
from .dataset_io import (
    dedup as dedup_images,
    list_images,
    read_dataset,
    record_to_json_dict,
    write_dataset,
)
from .divergence import DivergenceRecord, Thresholds, measure, pool_statistics
from .diversity import EmbeddingMatrix, measure_e_vendi
from .errors import ConfigError, PromptGapError, SchemaViolation
from .gateway import EndpointConfig, Gateway
from .sampling import balanced_sample, kmeans, match_diversity
from .synthesis import PipelineConfig, run_pipeline, _GatewayEmbedder
from .templates import ANSWER_FORMAT_INSTRUCTION


def _load_gateway(config_path: str) -> Gateway:
    try:
        with open(config_path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
        endpoints = {
            role: EndpointConfig.from_json_dict(role, row)
            for role, row in raw.get("endpoints", {}).items()
        }
        if not endpoints:
            raise ConfigError("config has no endpoints")
        cache_dir = Path(raw.get("run_dir", ".")) / "cache"
        return Gateway(endpoints, cache_dir)
    except (OSError, json.JSONDecodeError, TypeError, ValueError) as exc:
        raise ConfigError(f"invalid config {config_path}: {exc}") from exc


def _exit_codes(fn):
    """Map toolkit errors to exit codes: config/schema -> 2, runtime -> 1."""

    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except (ConfigError, SchemaViolation) as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(2)
        except PromptGapError as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(1)

    return wrapper


@click.group()
def main():
    """Quantify teacher-student answer divergence and curate prompt datasets."""


@main.command()
@click.option("--dataset", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--config", "config_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--k", default=16, show_default=True, help="Rollouts per model per prompt.")
@click.option("--out", required=True, type=click.Path(dir_okay=False))
@click.option("--grouping", type=click.Choice(["exact", "judge"]), default="exact", show_default=True)
@_exit_codes
def measure_cmd(dataset, config_path, k, out, grouping):
    """Measure answer divergence for every prompt in a dataset."""
    gateway = _load_gateway(config_path)
    for role in ("teacher", "student"):
        if role not in gateway.configs:
            raise ConfigError(f"missing endpoint config for role {role!r}")
    if grouping == "judge" and "judge" not in gateway.configs:
        raise ConfigError("grouping=judge requires a judge endpoint")
    judge = gateway.make_judge() if grouping == "judge" else None

    records = read_dataset(dataset)
    results: List[DivergenceRecord] = []
    for prompt in records:
        teacher = gateway.sample_rollouts(
            "teacher", prompt, k, instruction=ANSWER_FORMAT_INSTRUCTION
        )
        student = gateway.sample_rollouts(
            "student", prompt, k, instruction=ANSWER_FORMAT_INSTRUCTION
        )
        t_dist, s_dist = build_distributions(
            prompt, teacher, student, grouping_mode=grouping, judge=judge
        )
        results.append(measure(prompt.id, t_dist, s_dist))

    out_path = Path(out)
    if out_path.parent != Path(""):
        out_path.parent.mkdir(parents=True, exist_ok=True)
    with open(out_path, "w", encoding="utf-8") as fh:
        for record in results:
            fh.write(json.dumps(record.to_json_dict()) + "\n")
    stats = pool_statistics(results)
    click.echo(stats.render())


main.add_command(measure_cmd, name="measure")


def _read_records(path: str) -> List[DivergenceRecord]:
    rows: List[DivergenceRecord] = []
    with open(path, "r", encoding="utf-8") as fh:
        for line_number, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rows.append(DivergenceRecord.from_json_dict(json.loads(line)))
            except (json.JSONDecodeError, KeyError, ValueError) as exc:
                raise SchemaViolation(line_number, str(exc)) from exc
    return rows


@main.command()
@click.option("--records", "records_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--keep", required=True, type=click.Choice(["delta", "zero-delta", "easy", "hard"]))
@click.option("--out", required=True, type=click.Path(dir_okay=False))
@click.option("--dataset", type=click.Path(exists=True, dir_okay=False),
              help="Optional prompt dataset to filter; defaults to filtering the records.")
@_exit_codes
def filter_cmd(records_path, keep, out, dataset):
    """Filter by divergence classification or teacher-consistency class."""
    rows = _read_records(records_path)
    predicate = {
        "delta": lambda r: r.classification == "delta",
        "zero-delta": lambda r: r.classification == "zero_delta",
        "easy": lambda r: r.consistency_class == "easy",
        "hard": lambda r: r.consistency_class == "hard",
    }[keep]
    selected = [r for r in rows if predicate(r)]
    if not selected:
        click.echo(f"warning: no records matched --keep {keep}", err=True)
    out_path = Path(out)
    if out_path.parent != Path(""):
        out_path.parent.mkdir(parents=True, exist_ok=True)
    if dataset:
        keep_ids = {r.prompt_id for r in selected}
        prompts = [p for p in read_dataset(dataset) if p.id in keep_ids]
        write_dataset(prompts, out_path)
        click.echo(f"kept {len(prompts)} of {len(rows)} prompts")
    else:
        with open(out_path, "w", encoding="utf-8") as fh:
            for record in selected:
                fh.write(json.dumps(record.to_json_dict()) + "\n")
        click.echo(f"kept {len(selected)} of {len(rows)} records")


main.add_command(filter_cmd, name="filter")


def _parse_pools(pool_args: Tuple[str, ...]) -> Dict[str, str]:
    pools: Dict[str, str] = {}
    for entry in pool_args:
        if "=" in entry:
            name, path = entry.split("=", 1)
        else:
            name, path = Path(entry).stem, entry
        pools[name] = path
    return pools


@main.command()
@click.option("--pool", "pool_args", multiple=True, required=True,
              help="Dataset JSONL, optionally as name=path; repeatable for matching.")
@click.option("--n", "n_target", required=True, type=int)
@click.option("--k-clusters", type=int, default=None)
@click.option("--match-target", default=None,
              help="Pool name whose diversity the other pools are matched to.")
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--config", "config_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--out", required=True, type=click.Path(dir_okay=False))
@_exit_codes
def sample_cmd(pool_args, n_target, k_clusters, match_target, seed, config_path, out):
    """Cluster-balanced subset sampling, optionally diversity-matched."""
    if (k_clusters is None) == (match_target is None):
        raise ConfigError("pass exactly one of --k-clusters or --match-target")
    gateway = _load_gateway(config_path)
    if "embedder" not in gateway.configs:
        raise ConfigError("sampling requires an embedder endpoint")
    pools = {name: read_dataset(path) for name, path in _parse_pools(pool_args).items()}

    out_path = Path(out)
    if out_path.parent != Path(""):
        out_path.parent.mkdir(parents=True, exist_ok=True)
    rows: List[Dict[str, str]] = []
    if k_clusters is not None:
        if len(pools) != 1:
            raise ConfigError("--k-clusters expects exactly one --pool")
        (name, prompts), = pools.items()
        vectors = gateway.embed([p.text for p in prompts])
        m = EmbeddingMatrix(vectors=vectors, ids=[p.id for p in prompts])
        clusters = kmeans(m, k_clusters, seed)
        for i in balanced_sample(clusters, n_target, seed):
            rows.append({"pool": name, "prompt_id": prompts[i].id})
    else:
        if match_target not in pools:
            raise ConfigError(f"--match-target {match_target!r} is not a named pool")
        texts = {name: [p.text for p in prompts] for name, prompts in pools.items()}
        results = match_diversity(
            texts, match_target, _GatewayEmbedder(gateway), n_target, seed=seed
        )
        for name, result in results.items():
            prompts = pools[name]
            if result.flagged:
                click.echo(f"warning: pool {name!r} could not match within tolerance "
                           f"(closest k={result.k}, score={result.score:.3f})", err=True)
            for i in result.indices:
                rows.append({"pool": name, "prompt_id": prompts[i].id})
    with open(out_path, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row) + "\n")
    click.echo(f"wrote {len(rows)} selections to {out_path}")


main.add_command(sample_cmd, name="sample")


@main.command()
@click.option("--pool", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--subset-size", default=10000, show_default=True, type=int)
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--config", "config_path", required=True, type=click.Path(exists=True, dir_okay=False))
@_exit_codes
def vendi_cmd(pool, subset_size, seed, config_path):
    """Diversity score of a uniformly sampled subset of a prompt pool."""
    gateway = _load_gateway(config_path)
    if "embedder" not in gateway.configs:
        raise ConfigError("vendi requires an embedder endpoint")
    prompts = read_dataset(pool)
    score = measure_e_vendi(
        [p.text for p in prompts], _GatewayEmbedder(gateway),
        subset_size=subset_size, seed=seed,
    )
    click.echo(f"{score:.6f}")


main.add_command(vendi_cmd, name="vendi")


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--stage", type=click.Choice(["seed", "skill", "all"]), default="all", show_default=True)
@click.option("--resume/--no-resume", default=True, show_default=True,
              help="--no-resume clears the completion cache before running.")
@_exit_codes
def synthesize_cmd(config_path, stage, resume):
    """Run the two-stage synthesis pipeline and write dataset + report."""
    cfg = PipelineConfig.from_json(config_path)
    if stage != "all":
        cfg.stages = (stage,)
    cache_dir = Path(cfg.run_dir) / "cache"
    if not resume and cache_dir.exists():
        shutil.rmtree(cache_dir)
    report = run_pipeline(cfg)
    click.echo(report.render())


main.add_command(synthesize_cmd, name="synthesize")


@main.command()
@click.option("--pool", "pool_paths", multiple=True, required=True,
              type=click.Path(exists=True), help="Image files or directories; repeatable.")
@click.option("--holdout", "holdout_paths", multiple=True, type=click.Path(exists=True))
@click.option("--threshold", default=10, show_default=True, type=int)
@click.option("--out", type=click.Path(dir_okay=False), default=None,
              help="Write the flagged/retained manifest JSON here.")
@_exit_codes
def dedup_cmd(pool_paths, holdout_paths, threshold, out):
    """Flag pool images near holdout images and collapse internal near-dups."""
    pool = list_images(pool_paths)
    holdout = list_images(holdout_paths)
    result = dedup_images(pool, holdout, threshold=threshold)
    manifest = {
        "retained": result.retained,
        "flagged": [
            {"image": image, "matched": matched, "distance": distance}
            for image, matched, distance in result.flagged
        ],
        "decode_failures": result.decode_failures,
    }
    if out:
        out_path = Path(out)
        if out_path.parent != Path(""):
            out_path.parent.mkdir(parents=True, exist_ok=True)
        with open(out_path, "w", encoding="utf-8") as fh:
            json.dump(manifest, fh, indent=2)
    click.echo(f"retained {len(result.retained)}, flagged {len(result.flagged)}, "
               f"decode failures {len(result.decode_failures)}")


main.add_command(dedup_cmd, name="dedup")


if __name__ == "__main__":
    main()
