"""Command-line interface: dataset preparation, training, completion,
resampling, evaluation, and the HTTP service."""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click
import numpy as np

from . import pngio
from .dataset import load_manifest, load_pair_manifest, sample_sparse
from .errors import SceneFillError
from .extractors import build_image_embedder
from .metrics import (
    ConfusionAccumulator,
    CooccurrenceTable,
    extract_feature_stats,
    fid,
    segmentation_scores,
    similarity_from_tables,
)
from .pipeline import complete, load_bundle, resample
from .taxonomy import ClassTaxonomy
from .toyworld import ToyWorldConfig, build_toy_corpus, default_toy_config, default_toy_taxonomy, materialize_corpus
from .training import TrainConfig, train_stage


def _die(message: str) -> None:
    click.echo(f"error: {message}", err=True)
    sys.exit(1)


def _emit_report(report: dict, out: str | None) -> None:
    text = json.dumps(report, indent=2)
    if out:
        Path(out).write_text(text)
        click.echo(f"wrote {out}")
    else:
        click.echo(text)


def _load_taxonomy(taxonomy_path: str | None, manifest_path: str | None) -> ClassTaxonomy:
    if taxonomy_path:
        return ClassTaxonomy.load(taxonomy_path)
    if manifest_path:
        candidate = Path(manifest_path).parent / "taxonomy.json"
        if candidate.exists():
            return ClassTaxonomy.load(candidate)
    _die("no taxonomy given and none found next to the manifest")


@click.group()
def main():
    """Scene completion from sparse labelmaps."""


@main.command()
@click.option("--manifest", "-m", required=True, type=click.Path(exists=True))
@click.option("--taxonomy", "-t", "taxonomy_path", type=click.Path(exists=True))
@click.option("--fraction", default=0.3, show_default=True)
@click.option("--out", "-o", required=True, type=click.Path())
@click.option("--seed", default=0, show_default=True)
@click.option("--fallback-class", type=int, default=None)
def prepare(manifest, taxonomy_path, fraction, out, seed, fallback_class):
    """Materialize sparse/dense PNG pairs for inspection."""
    try:
        taxonomy = _load_taxonomy(taxonomy_path, manifest)
        examples = load_manifest(manifest, taxonomy, fallback_class)
        out_dir = Path(out)
        out_dir.mkdir(parents=True, exist_ok=True)
        for i, ex in enumerate(examples):
            sparse = sample_sparse(ex.dense, ex.instances, taxonomy, fraction, seed + i)
            pngio.write_sparse_png(sparse, taxonomy, out_dir / f"{ex.source_id}_sparse.png")
            pngio.write_dense_png(ex.dense, out_dir / f"{ex.source_id}_dense.png")
        mean_instances = float(
            np.mean([len(ex.instances.thing_ids_present()) for ex in examples])
        )
        click.echo(
            f"wrote {len(examples)} sparse/dense pairs to {out_dir} "
            f"(mean thing instances/example: {mean_instances:.1f})"
        )
    except SceneFillError as exc:
        _die(str(exc))


@main.command()
@click.option("--config", "-c", "config_path", type=click.Path(exists=True))
@click.option("--taxonomy", "-t", "taxonomy_path", type=click.Path(exists=True))
@click.option("--count", "-n", default=100, show_default=True)
@click.option("--out", "-o", required=True, type=click.Path())
@click.option("--seed", default=0, show_default=True)
def toygen(config_path, taxonomy_path, count, out, seed):
    """Generate a synthetic toy corpus (PNGs + manifest + taxonomy)."""
    try:
        taxonomy = ClassTaxonomy.load(taxonomy_path) if taxonomy_path else default_toy_taxonomy()
        config = ToyWorldConfig.load(config_path) if config_path else default_toy_config()
        examples = build_toy_corpus(config, taxonomy, count, seed)
        manifest = materialize_corpus(examples, taxonomy, out)
        mean_instances = float(
            np.mean([len(ex.instances.thing_ids_present()) for ex in examples])
        )
        click.echo(
            f"wrote {count} scenes; manifest at {manifest} "
            f"(mean thing instances/example: {mean_instances:.1f})"
        )
    except SceneFillError as exc:
        _die(str(exc))


@main.command()
@click.option("--role", required=True, type=click.Choice(["stage1", "stage2", "single", "boundary"]))
@click.option("--config", "-c", "config_path", required=True, type=click.Path(exists=True))
@click.option("--manifest", "-m", required=True, type=click.Path(exists=True))
@click.option("--taxonomy", "-t", "taxonomy_path", type=click.Path(exists=True))
@click.option("--out", "-o", required=True, type=click.Path())
@click.option("--resume", "resume_path", type=click.Path(exists=True))
@click.option("--fallback-class", type=int, default=None)
def train(role, config_path, manifest, taxonomy_path, out, resume_path, fallback_class):
    """Train one network role on a dataset manifest."""
    try:
        taxonomy = _load_taxonomy(taxonomy_path, manifest)
        config = TrainConfig.from_file(config_path)
        dataset = load_manifest(manifest, taxonomy, fallback_class)
        role = "single_stage" if role == "single" else role
        result = train_stage(role, dataset, taxonomy, config, out, resume_from=resume_path)
        click.echo(f"checkpoint: {result.checkpoint_path}")
        click.echo(f"metric log: {result.log_path}")
    except SceneFillError as exc:
        _die(str(exc))


@main.command(name="complete")
@click.option("--checkpoints", "-k", required=True, type=click.Path(exists=True))
@click.option("--sparse", "-s", "sparse_path", required=True, type=click.Path(exists=True))
@click.option("--out", "-o", required=True, type=click.Path())
@click.option("--seed", type=int, default=None)
@click.option("--image/--no-image", "return_image", default=True, show_default=True)
@click.option("--backend", default="palette", type=click.Choice(["palette", "learned", "external"]))
@click.option("--external-cmd", default=None)
def complete_cmd(checkpoints, sparse_path, out, seed, return_image, backend, external_cmd):
    """Complete one sparse labelmap PNG."""
    try:
        bundle = load_bundle(checkpoints)
        sparse = pngio.read_sparse_png(sparse_path, bundle.taxonomy)
        result = complete(bundle, sparse, seed=seed, return_image=return_image,
                          backend=backend, external_cmd=external_cmd)
        out_dir = Path(out)
        out_dir.mkdir(parents=True, exist_ok=True)
        stem = Path(sparse_path).stem
        pngio.write_dense_png(result.dense, out_dir / f"{stem}_dense.png")
        pngio.write_boundary_png(result.boundary, out_dir / f"{stem}_boundary.png")
        if result.image is not None:
            pngio.write_image_png(result.image, out_dir / f"{stem}_image.png")
        click.echo(f"wrote completion artifacts to {out_dir}")
    except SceneFillError as exc:
        _die(str(exc))


@main.command(name="resample")
@click.option("--checkpoints", "-k", required=True, type=click.Path(exists=True))
@click.option("--dense", "-d", "dense_path", required=True, type=click.Path(exists=True))
@click.option("--instances", "-i", "instance_path", required=True, type=click.Path(exists=True))
@click.option("--fraction", default=0.3, show_default=True)
@click.option("--k", "count", default=4, show_default=True)
@click.option("--seed", type=int, default=None)
@click.option("--out", "-o", required=True, type=click.Path())
@click.option("--backend", default="palette", type=click.Choice(["palette", "learned", "external"]))
def resample_cmd(checkpoints, dense_path, instance_path, fraction, count, seed, out, backend):
    """Generate k scene variants from a parent dense layout."""
    try:
        bundle = load_bundle(checkpoints)
        dense = pngio.read_dense_png(dense_path)
        instances = pngio.read_instance_png(instance_path)
        variants = resample(bundle, dense, instances, fraction=fraction, k=count,
                            seed=seed, backend=backend)
        out_dir = Path(out)
        out_dir.mkdir(parents=True, exist_ok=True)
        for i, v in enumerate(variants):
            pngio.write_sparse_png(v.sparse, bundle.taxonomy, out_dir / f"variant{i}_sparse.png")
            pngio.write_dense_png(v.dense, out_dir / f"variant{i}_dense.png")
            pngio.write_boundary_png(v.boundary, out_dir / f"variant{i}_boundary.png")
            if v.image is not None:
                pngio.write_image_png(v.image, out_dir / f"variant{i}_image.png")
        click.echo(f"wrote {len(variants)} variants to {out_dir}")
    except SceneFillError as exc:
        _die(str(exc))


def _png_files(directory: str) -> list[Path]:
    files = sorted(Path(directory).glob("*.png"))
    if not files:
        _die(f"no PNG files in {directory}")
    return files


@main.command(name="eval-fid")
@click.option("--real", required=True, type=click.Path(exists=True))
@click.option("--gen", required=True, type=click.Path(exists=True))
@click.option("--extractor", "extractor_path", type=click.Path(exists=True))
@click.option("--out", "-o", type=click.Path())
def eval_fid(real, gen, extractor_path, out):
    """Feature-distribution distance between two image directories."""
    try:
        extractor_cfg = json.loads(Path(extractor_path).read_text()) if extractor_path else {}
        embedder = build_image_embedder(extractor_cfg)
        stats_r = extract_feature_stats((pngio.read_image_png(p) for p in _png_files(real)), embedder)
        stats_g = extract_feature_stats((pngio.read_image_png(p) for p in _png_files(gen)), embedder)
        report = {
            "fid": fid(stats_r, stats_g),
            "n_real": stats_r.n,
            "n_gen": stats_g.n,
            "extractor": extractor_cfg or {"kind": "random_conv"},
        }
        _emit_report(report, out)
    except SceneFillError as exc:
        _die(str(exc))


def _resolve_class(token, taxonomy: ClassTaxonomy) -> int:
    if isinstance(token, int):
        return token
    try:
        return int(token)
    except ValueError:
        return taxonomy.name_to_id(token)


@main.command(name="eval-cooc")
@click.option("--train", "train_manifest", required=True, type=click.Path(exists=True))
@click.option("--gen", "gen_manifest", required=True, type=click.Path(exists=True))
@click.option("--pairs", "pairs_path", required=True, type=click.Path(exists=True))
@click.option("--taxonomy", "-t", "taxonomy_path", type=click.Path(exists=True))
@click.option("--out", "-o", type=click.Path())
def eval_cooc(train_manifest, gen_manifest, pairs_path, taxonomy_path, out):
    """Object co-occurrence similarity between a training and a generated corpus.

    Both orders of each requested class pair are reported, since the
    directional convention differs between write-ups.
    """
    try:
        taxonomy = _load_taxonomy(taxonomy_path, train_manifest)
        train_pairs = load_pair_manifest(train_manifest, taxonomy)
        gen_pairs = load_pair_manifest(gen_manifest, taxonomy)
        train_table = CooccurrenceTable.from_pairs(train_pairs, taxonomy)
        gen_table = CooccurrenceTable.from_pairs(gen_pairs, taxonomy)
        requested = json.loads(Path(pairs_path).read_text())
        rows = []
        for entry in requested:
            if isinstance(entry, dict):
                c1, c2 = _resolve_class(entry["c1"], taxonomy), _resolve_class(entry["c2"], taxonomy)
            else:
                c1, c2 = (_resolve_class(e, taxonomy) for e in entry)
            row = {
                "c1": taxonomy[c1].name,
                "c2": taxonomy[c2].name,
                "p_train": train_table.p_oc(c1, c2),
                "p_gen": gen_table.p_oc(c1, c2),
                "sim": similarity_from_tables(train_table, gen_table, c1, c2),
            }
            try:
                row["sim_args_swapped"] = similarity_from_tables(train_table, gen_table, c2, c1)
            except SceneFillError:
                row["sim_args_swapped"] = None
            rows.append(row)
        _emit_report({"pairs": rows}, out)
    except SceneFillError as exc:
        _die(str(exc))


@main.command(name="eval-seg")
@click.option("--pred", required=True, type=click.Path(exists=True))
@click.option("--gt", required=True, type=click.Path(exists=True))
@click.option("--taxonomy", "-t", "taxonomy_path", required=True, type=click.Path(exists=True))
@click.option("--out", "-o", type=click.Path())
def eval_seg(pred, gt, taxonomy_path, out):
    """Segmentation scores of predicted labelmaps against ground truth."""
    try:
        taxonomy = ClassTaxonomy.load(taxonomy_path)
        pred_files = {p.name: p for p in _png_files(pred)}
        gt_files = {p.name: p for p in _png_files(gt)}
        if set(pred_files) != set(gt_files):
            _die("pred and gt directories hold different file sets")
        acc = ConfusionAccumulator.for_taxonomy(taxonomy)
        for name in sorted(gt_files):
            acc.add(pngio.read_dense_png(gt_files[name]), pngio.read_dense_png(pred_files[name]))
        scores = segmentation_scores(acc)
        report = {
            "miou": scores.miou,
            "macc": scores.macc,
            "pixel_accuracy": scores.pixel_accuracy,
            "per_class_iou": {
                taxonomy[cid].name: iou for cid, iou in scores.per_class_iou.items()
            },
        }
        _emit_report(report, out)
    except SceneFillError as exc:
        _die(str(exc))


@main.command()
@click.option("--port", "-p", default=8000, show_default=True)
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--checkpoints", "-k", required=True, type=click.Path(exists=True))
@click.option("--backend", default="palette", type=click.Choice(["palette", "learned", "external"]))
def serve(port, host, checkpoints, backend):
    """Run the completion HTTP service."""
    import uvicorn

    from .service import create_app_from_dir

    try:
        app = create_app_from_dir(checkpoints, backend=backend)
    except SceneFillError as exc:
        _die(str(exc))
    uvicorn.run(app, host=host, port=port)


if __name__ == "__main__":
    main()
