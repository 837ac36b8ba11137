"""
    geoclust.cli
    ~~~~~

    Command line front end. ``pipeline`` runs every stage; the other commands
    run one stage on persisted artifacts and derive their seeds from the
    top-level ``--seed`` the same way the pipeline does.

    Exit codes: 0 success, 2 config error, 3 data error, 4 numeric failure.
"""
import json
import logging
import os
from contextlib import contextmanager
from typing import List, Optional

import typer

from .catalog import COMPARABLE_METRICS, Catalog
from .clustering import (
    ELBOW_FILE,
    elbow_sweep,
    kmeans_fit,
    kneedle_detect,
    save_cluster_model,
    write_elbow_csv,
)
from .dimred import save_pca
from .errors import ConfigError, GeoclustError
from .metrics import read_ground_truth, sample_ground_truth, score_elbow, write_ground_truth
from .neuralnet import TrainConfig, save_network
from .pipeline import (
    METHODS,
    evaluate_labels,
    latent_to_raster,
    load_config,
    reduce_matrix,
    run_pipeline,
)
from .postprocess import majority_filter, read_label_grid, render_map, write_label_grid
from .preprocess import build_pixel_matrix, grid_to_labels, labels_to_grid, minmax_scale
from .raster_io import crop, read_raster, stack_bands, write_raster
from .synthetic import SyntheticSceneSpec, generate_synthetic
from .utils import derive_seed, dump_json, json_safe

logger = logging.getLogger(__name__)

app = typer.Typer(
    name="geoclust",
    help="Unsupervised geological mapping from multispectral rasters",
    add_completion=False,
)


@contextmanager
def _reported():
    """Turn library errors into a message on stderr and the matching exit code."""
    try:
        yield
    except GeoclustError as e:
        typer.echo("error: {}".format(e), err=True)
        raise typer.Exit(code=e.exit_code)


def _int_list(value, name, length=None):
    if value is None:
        return None
    try:
        numbers = [int(part) for part in value.split(",")]
    except ValueError:
        raise ConfigError("{} must be comma separated integers, got {!r}".format(name, value))
    if length is not None and len(numbers) != length:
        raise ConfigError("{} needs {} integers".format(name, length))
    return numbers


def _method(value):
    if value not in METHODS:
        raise ConfigError("method must be one of {}".format(", ".join(METHODS)))
    return value


@app.callback()
def main(
    verbose: bool = typer.Option(False, "--verbose", "-v", help="Log debug details"),
):
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format="%(asctime)s %(name)s %(levelname)s %(message)s",
    )


@app.command()
def synth(
    out: str = typer.Option(..., "--out", "-o", help="Directory for scene, truth and truth.csv"),
    rows: int = typer.Option(128, help="Scene rows"),
    cols: int = typer.Option(128, help="Scene columns"),
    bands: int = typer.Option(8, help="Number of bands"),
    classes: int = typer.Option(6, help="Number of geological units"),
    sigma: float = typer.Option(0.02, help="Gaussian noise sigma"),
    sites: int = typer.Option(24, help="Number of Voronoi sites"),
    truth_points: int = typer.Option(30, help="Ground-truth sample points for truth.csv"),
    seed: int = typer.Option(0, help="Top-level seed"),
):
    """Generate a seeded synthetic scene with its truth map."""
    with _reported():
        spec = SyntheticSceneSpec(
            rows=rows,
            cols=cols,
            n_bands=bands,
            n_classes=classes,
            noise_sigma=sigma,
            sites=sites,
            seed=seed,
        )
        raster, truth = generate_synthetic(spec)
        write_raster(raster, os.path.join(out, "scene"))
        write_label_grid(truth, os.path.join(out, "truth"))
        points = sample_ground_truth(truth, truth_points, derive_seed(seed, "synthetic.truth"))
        write_ground_truth(points, os.path.join(out, "truth.csv"))
        typer.echo(os.path.join(out, "scene"))


@app.command()
def ingest(
    inputs: List[str] = typer.Argument(..., help="Raster directories, stacked in order"),
    out: str = typer.Option(..., "--out", "-o", help="Output raster directory"),
    window: Optional[str] = typer.Option(None, "--crop", help="row0,col0,rows,cols"),
):
    """Stack rasters on the finest grid and optionally crop them."""
    with _reported():
        grid = stack_bands([read_raster(path) for path in inputs])
        bounds = _int_list(window, "crop", length=4)
        if bounds is not None:
            grid = crop(grid, *bounds)
        write_raster(grid, out)
        typer.echo("{} x {} x {}".format(grid.rows, grid.cols, grid.bands))


@app.command()
def reduce(
    input: str = typer.Option(..., "--input", "-i", help="Raster directory"),
    out: str = typer.Option(..., "--out", "-o", help="Output directory"),
    method: str = typer.Option("sae", help="pca, ae or sae"),
    variance_target: float = typer.Option(0.90, help="PCA variance share to keep"),
    latent_dim: Optional[int] = typer.Option(None, help="Latent width for ae"),
    hidden_dims: Optional[str] = typer.Option(None, help="h1,h2 widths for sae"),
    epochs: int = typer.Option(10),
    batch_size: int = typer.Option(32),
    learning_rate: float = typer.Option(0.005),
    seed: int = typer.Option(0, help="Top-level seed"),
):
    """Scale a raster and reduce it to a latent raster."""
    with _reported():
        method = _method(method)
        grid = read_raster(input)
        scaled, scaling = minmax_scale(build_pixel_matrix(grid))
        os.makedirs(out, exist_ok=True)
        scaling.save(os.path.join(out, "scaling.json"))
        train_config = TrainConfig(
            epochs=epochs,
            batch_size=batch_size,
            learning_rate=learning_rate,
            seed=derive_seed(seed, "reduce"),
        )
        reduction = reduce_matrix(
            scaled,
            method,
            train_config,
            variance_target=variance_target,
            latent_dim=latent_dim,
            hidden_dims=_int_list(hidden_dims, "hidden_dims", length=2),
        )
        save_pca(reduction.pca_model, os.path.join(out, "pca"))
        for i, network in enumerate(reduction.networks):
            save_network(network, os.path.join(out, "autoencoder{}".format(i + 1)), train_config)
        write_raster(
            latent_to_raster(reduction.latent, scaled, grid.geotransform),
            os.path.join(out, "latent"),
        )
        typer.echo(
            "m={} reconstruction_loss={:.6g}".format(
                reduction.latent.m, reduction.reconstruction_loss
            )
        )


@app.command()
def elbow(
    latent: str = typer.Option(..., "--latent", "-l", help="Latent raster directory"),
    out: str = typer.Option(..., "--out", "-o", help="Output directory for elbow.csv"),
    k_min: int = typer.Option(2),
    k_max: int = typer.Option(12),
    restarts: int = typer.Option(10),
    max_iter: int = typer.Option(300),
    tol: float = typer.Option(1e-6),
    seed: int = typer.Option(0, help="Top-level seed"),
):
    """Sweep k, write the WCSS curve and print the elbow."""
    with _reported():
        features = build_pixel_matrix(read_raster(latent))
        curve = elbow_sweep(
            features,
            derive_seed(seed, "elbow"),
            k_min=k_min,
            k_max=k_max,
            max_iter=max_iter,
            tol=tol,
            restarts=restarts,
        )
        curve = score_elbow(curve, features)
        os.makedirs(out, exist_ok=True)
        write_elbow_csv(curve, os.path.join(out, ELBOW_FILE))
        typer.echo(kneedle_detect(curve))


@app.command()
def cluster(
    latent: str = typer.Option(..., "--latent", "-l", help="Latent raster directory"),
    out: str = typer.Option(..., "--out", "-o", help="Output directory"),
    k: int = typer.Option(..., "--k", "-k", help="Number of clusters"),
    restarts: int = typer.Option(10),
    max_iter: int = typer.Option(300),
    tol: float = typer.Option(1e-6),
    seed: int = typer.Option(0, help="Top-level seed"),
):
    """Run k-means on a latent raster and write the label map."""
    with _reported():
        grid = read_raster(latent)
        features = build_pixel_matrix(grid)
        model = kmeans_fit(
            features,
            k,
            derive_seed(seed, "kmeans"),
            max_iter=max_iter,
            tol=tol,
            restarts=restarts,
        )
        save_cluster_model(model, os.path.join(out, "clusters"))
        write_label_grid(
            labels_to_grid(
                model.labels,
                features.index_map,
                grid.rows,
                grid.cols,
                k=k,
                geotransform=grid.geotransform,
            ),
            os.path.join(out, "labels"),
        )
        typer.echo("inertia={:.6g}".format(model.inertia))


@app.command(name="filter")
def filter_labels(
    labels: str = typer.Option(..., "--labels", help="Label grid directory"),
    out: str = typer.Option(..., "--out", "-o", help="Filtered label grid directory"),
    kernel: int = typer.Option(7, help="Odd window size"),
):
    """Smooth a label map with a majority filter."""
    with _reported():
        write_label_grid(majority_filter(read_label_grid(labels), kernel), out)


@app.command()
def render(
    labels: str = typer.Option(..., "--labels", help="Label grid directory"),
    out: str = typer.Option(..., "--out", "-o", help="PNG file"),
):
    """Render a label map as a palette PNG."""
    with _reported():
        png = render_map(read_label_grid(labels))
        with open(out, "wb") as f:
            f.write(png)


@app.command()
def evaluate(
    latent: str = typer.Option(..., "--latent", "-l", help="Latent raster directory"),
    labels: str = typer.Option(..., "--labels", help="Label grid directory"),
    out: Optional[str] = typer.Option(None, "--out", "-o", help="Report JSON file"),
    method: str = typer.Option("sae", help="Method that produced the latent raster"),
    truth: Optional[str] = typer.Option(None, help="Ground-truth CSV"),
    truth_grid: Optional[str] = typer.Option(None, help="Truth label grid directory"),
    silhouette_sample: int = typer.Option(10000),
    seed: int = typer.Option(0, help="Top-level seed"),
):
    """Score a label map against its latent features and optional truth.

    The latent raster is stored as float32, so CH, DB and silhouette can differ
    in the last digits from the report of the pipeline run that wrote it, which
    scores the in-memory float64 latents.
    """
    with _reported():
        features = build_pixel_matrix(read_raster(latent))
        label_grid = read_label_grid(labels)
        report = evaluate_labels(
            features.values,
            grid_to_labels(label_grid, features.index_map),
            METHODS[_method(method)],
            seed,
            label_grid=label_grid,
            truth=read_ground_truth(truth) if truth else None,
            truth_grid=read_label_grid(truth_grid) if truth_grid else None,
            index_map=features.index_map,
            silhouette_sample=silhouette_sample,
        ).to_document()
        if out:
            dump_json(report, out)
        typer.echo(json.dumps(json_safe(report), indent=2, sort_keys=True))


@app.command()
def pipeline(
    config: Optional[str] = typer.Option(None, "--config", "-c", help="JSON config file"),
    input: Optional[str] = typer.Option(None, "--input", "-i"),
    out: Optional[str] = typer.Option(None, "--out", "-o"),
    method: Optional[str] = typer.Option(None, help="pca, ae or sae"),
    variance_target: Optional[float] = typer.Option(None, help="PCA variance share to keep"),
    latent_dim: Optional[int] = typer.Option(None, help="Latent width for ae"),
    hidden_dims: Optional[str] = typer.Option(None, help="h1,h2 widths for sae"),
    epochs: Optional[int] = typer.Option(None),
    batch_size: Optional[int] = typer.Option(None),
    learning_rate: Optional[float] = typer.Option(None),
    seed: Optional[int] = typer.Option(None),
    k: Optional[str] = typer.Option(None, "--k", "-k", help="auto or a cluster count"),
    k_min: Optional[int] = typer.Option(None, help="Smallest k of the elbow sweep"),
    k_max: Optional[int] = typer.Option(None, help="Largest k of the elbow sweep"),
    restarts: Optional[int] = typer.Option(None, help="k-means restarts"),
    max_iter: Optional[int] = typer.Option(None, help="Lloyd iterations per restart"),
    tol: Optional[float] = typer.Option(None, help="Centroid shift tolerance"),
    filter: Optional[str] = typer.Option(None, "--filter", help="off or an odd kernel size"),
    silhouette_sample: Optional[int] = typer.Option(None, help="Silhouette sample size"),
    window: Optional[str] = typer.Option(None, "--crop", help="row0,col0,rows,cols"),
    truth: Optional[str] = typer.Option(None, help="Ground-truth CSV"),
    truth_grid: Optional[str] = typer.Option(None, help="Truth label grid directory"),
    catalog: Optional[str] = typer.Option(None, help="SQLAlchemy URL to record the run in"),
    scene: Optional[str] = typer.Option(None, help="Scene name for the catalog"),
):
    """Run every stage; flags override the config file."""
    with _reported():
        pipeline_config = load_config(
            config,
            input=input,
            out=out,
            method=method,
            variance_target=variance_target,
            latent_dim=latent_dim,
            hidden_dims=_int_list(hidden_dims, "hidden_dims", length=2),
            epochs=epochs,
            batch_size=batch_size,
            learning_rate=learning_rate,
            seed=seed,
            k=k,
            k_min=k_min,
            k_max=k_max,
            restarts=restarts,
            max_iter=max_iter,
            tol=tol,
            filter=filter,
            silhouette_sample=silhouette_sample,
            crop=_int_list(window, "crop", length=4),
            truth=truth,
            truth_grid=truth_grid,
            catalog=catalog,
            scene=scene,
        )
        result = run_pipeline(pipeline_config)
        typer.echo(
            json.dumps(
                json_safe({"k": result.manifest["k"], "out": result.out, "report": result.report}),
                indent=2,
                sort_keys=True,
            )
        )


@app.command()
def compare(
    catalog: Optional[str] = typer.Option(
        None, "--catalog", help="SQLAlchemy URL (default GEOCLUST_CATALOG_URI)"
    ),
    metric: str = typer.Option("overall_accuracy", help=", ".join(COMPARABLE_METRICS)),
):
    """Print the scene x method table of the latest catalogued runs."""
    with _reported():
        runs = Catalog(uri=catalog)
        runs.create_all()
        table = runs.comparison_table(metric)
        methods = sorted({method for row in table.values() for method in row})
        typer.echo("\t".join(["scene"] + methods))
        for scene in sorted(table):
            cells = [_cell(table[scene].get(method)) for method in methods]
            typer.echo("\t".join([scene] + cells))


def _cell(value):
    if value is None:
        return "-"
    if isinstance(value, float):
        return "{:.4g}".format(value)
    return str(value)
