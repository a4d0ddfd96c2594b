"""Command line entry points.

serve     run the HTTP service
query     one-shot pipeline run, JSON to stdout
ingest    OSM XML to the ndjson object dump the service loads
datagen   sample a synthetic dataset (stub client by default)
eval      score predictions against gold and render the report files
"""

from __future__ import annotations

import dataclasses
import json
import sys

import click
import yaml

from .config import load_config
from .datagen import GenConfig, HttpTextGenClient, StubTextGenClient, generate_dataset
from .embeddings import HashingEmbedder
from .errors import GeoSceneError, UnknownAreaError, UnresolvableDescriptorError
from .evalharness import evaluate_dataset, load_gold_file, load_pred_file
from .geostore import dump_objects, ingest_osm_xml
from .report import format_report, write_report
from .service import create_app, load_state, run_query


@click.group()
def main() -> None:
    """Scene search over OSM snapshots."""


@main.command()
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8000, show_default=True)
def serve(config_path: str | None, host: str, port: int) -> None:
    """Run the HTTP service."""
    import uvicorn

    try:
        state = load_state(load_config(config_path))
    except GeoSceneError as exc:
        raise click.ClickException(str(exc))
    uvicorn.run(create_app(state), host=host, port=port)


def _suggestion_note(exc: GeoSceneError) -> str:
    if isinstance(exc, UnresolvableDescriptorError) and exc.candidates:
        names = ", ".join(c.bundle_id for c in exc.candidates)
        return f" (closest bundles: {names})"
    if isinstance(exc, UnknownAreaError) and exc.suggestions:
        return f" (did you mean: {', '.join(exc.suggestions)})"
    return ""


@main.command()
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
@click.option("--text", default=None, help="Natural language input.")
@click.option(
    "--yaml-file",
    type=click.Path(exists=True, allow_dash=True),
    default=None,
    help="Query YAML path, - for stdin.",
)
@click.option("--bbox", default=None, help="min_lat,min_lon,max_lat,max_lon fallback.")
@click.option("--max-results", type=int, default=None)
def query(
    config_path: str | None,
    text: str | None,
    yaml_file: str | None,
    bbox: str | None,
    max_results: int | None,
) -> None:
    """Run one query and print the response JSON."""
    if (text is None) == (yaml_file is None):
        raise click.UsageError("provide exactly one of --text or --yaml-file")
    yaml_text = None
    if yaml_file is not None:
        if yaml_file == "-":
            yaml_text = sys.stdin.read()
        else:
            with open(yaml_file, encoding="utf-8") as handle:
                yaml_text = handle.read()
    box = None
    if bbox is not None:
        try:
            parts = tuple(float(p) for p in bbox.split(","))
        except ValueError:
            raise click.UsageError(f"bbox is not numeric: {bbox!r}")
        if len(parts) != 4:
            raise click.UsageError("bbox needs four comma-separated numbers")
        box = parts
    try:
        state = load_state(load_config(config_path))
        body = run_query(
            state, text=text, yaml_text=yaml_text, bbox=box, max_results=max_results
        )
    except GeoSceneError as exc:
        raise click.ClickException(f"{exc}{_suggestion_note(exc)}")
    click.echo(json.dumps(body, ensure_ascii=False, indent=2, sort_keys=True))


@main.command()
@click.argument("osm_xml", type=click.Path(exists=True))
@click.option("-o", "--out", required=True, type=click.Path())
def ingest(osm_xml: str, out: str) -> None:
    """Parse OSM XML and write the object dump."""
    try:
        store, stats = ingest_osm_xml(osm_xml)
        dump_objects(store, out)
    except GeoSceneError as exc:
        raise click.ClickException(str(exc))
    click.echo(
        f"{len(store)} objects -> {out} "
        f"(nodes {stats.nodes}, ways {stats.ways}, relations {stats.relations}, "
        f"skipped {stats.skipped_ways + stats.skipped_relations})"
    )


def _gen_config(seed: int | None, gen_config_path: str | None) -> GenConfig:
    overrides: dict = {}
    if gen_config_path is not None:
        with open(gen_config_path, encoding="utf-8") as handle:
            loaded = yaml.safe_load(handle) or {}
        if not isinstance(loaded, dict):
            raise click.ClickException("generator config must be a YAML mapping")
        known = {f.name for f in dataclasses.fields(GenConfig)}
        unknown = sorted(set(loaded) - known)
        if unknown:
            raise click.ClickException(f"unknown generator config key(s): {', '.join(unknown)}")
        overrides.update(loaded)
        if "entity_count_range" in overrides:
            overrides["entity_count_range"] = tuple(overrides["entity_count_range"])
    if seed is not None:
        overrides["seed"] = seed
    return GenConfig(**overrides)


@main.command()
@click.option("-n", "--count", type=int, required=True, help="Records to sample.")
@click.option("--seed", type=int, default=None, help="Overrides the config seed.")
@click.option("--gen-config", "gen_config_path", type=click.Path(exists=True), default=None)
@click.option("-o", "--out-dir", type=click.Path(), default=".", show_default=True)
@click.option("--split-dev", type=float, default=0.05, show_default=True)
@click.option("--endpoint", default=None, help="Text model URL; stub client if unset.")
def datagen(
    count: int,
    seed: int | None,
    gen_config_path: str | None,
    out_dir: str,
    split_dev: float,
    endpoint: str | None,
) -> None:
    """Sample prompts, queries and sentences into train/dev files."""
    cfg = _gen_config(seed, gen_config_path)
    client = StubTextGenClient(cfg.seed) if endpoint is None else HttpTextGenClient(endpoint)
    try:
        summary = generate_dataset(cfg, count, client, split_dev=split_dev, out_dir=out_dir)
    except (GeoSceneError, ValueError) as exc:
        raise click.ClickException(str(exc))
    click.echo(f"train: {summary.train_count} -> {summary.train_path}")
    click.echo(f"dev:   {summary.dev_count} -> {summary.dev_path}")
    if summary.error_count:
        click.echo(f"client failures: {summary.error_count}", err=True)


@main.command("eval")
@click.option("--gold", "gold_path", type=click.Path(exists=True), required=True)
@click.option("--pred", "pred_path", type=click.Path(exists=True), required=True)
@click.option("-o", "--out-dir", type=click.Path(), required=True)
@click.option("--basename", default="eval_report", show_default=True)
def eval_command(gold_path: str, pred_path: str, out_dir: str, basename: str) -> None:
    """Score predictions and write report files (JSON, CSV, figures)."""
    try:
        golds, metas = load_gold_file(gold_path)
        preds = load_pred_file(pred_path)
        report = evaluate_dataset(preds, golds, metas, HashingEmbedder())
        paths = write_report(report, out_dir, basename=basename)
    except GeoSceneError as exc:
        raise click.ClickException(str(exc))
    click.echo(format_report(report))
    for path in paths.all():
        click.echo(f"wrote {path}")


if __name__ == "__main__":
    main()
