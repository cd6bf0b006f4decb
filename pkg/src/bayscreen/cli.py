"""Command-line interface.

Exit codes: 0 success, 2 usage error, 3 domain error (failed search source,
screening stop condition, missing session data).
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:                 # Python < 3.11
    import tomli as tomllib

import click
import pandas as pd

from . import service
from .bart import BartConfig
from .ensemble import EnsembleConfig, Limits
from .performance import SurrogateConfig, estimate_performance
from .queries import parse_query, parse_year_filter, DIALECTS
from .records import create_annotation_file
from .reporting import (get_source_distribution, summarise_iterations,
                        summarise_sources)
from .screening import ScreeningError, run_cr_iteration
from .sources import (SOURCES, ApiCredentials, parse_bib_path,
                      perform_search_session)
from .store import (Workspace, consolidate_results, latest_annotation,
                    read_annotation, read_journal, write_annotation)
from .tuning import COMBO_FIELDS, GridSpec, analyse_grid, enumerate_grid, run_trial

DOMAIN_EXIT = 3

CONFIG_KEYS = {
    "workspace", "n_models", "oversample_mult", "resample", "pred_quantiles",
    "stop_after", "pos_target", "labeling_limit",
    "n_trees", "n_iterations", "n_burnin", "seed",
}


def _load_config(path: str | None) -> dict:
    if path is None:
        return {}
    raw = Path(path).read_bytes()
    values = tomllib.loads(raw.decode("utf-8"))
    unknown = set(values) - CONFIG_KEYS
    if unknown:
        raise click.UsageError(
            f"unknown config keys: {sorted(unknown)}; valid keys are "
            f"{sorted(CONFIG_KEYS)}")
    return values


def _ensemble_config(cfg: dict, **overrides) -> EnsembleConfig:
    unknown = set(overrides) - (CONFIG_KEYS - {"workspace"})
    if unknown:
        raise ValueError(f"unknown option(s): {', '.join(sorted(unknown))}")
    merged = {**cfg, **{k: v for k, v in overrides.items() if v is not None}}
    quantiles = merged.get("pred_quantiles", (0.01, 0.5, 0.99))
    if isinstance(quantiles, str):
        quantiles = tuple(float(q) for q in quantiles.split(","))
    return EnsembleConfig(
        n_models=int(merged.get("n_models", 10)),
        oversample_mult=int(merged.get("oversample_mult", 10)),
        pred_quantiles=tuple(quantiles),
        resample=bool(merged.get("resample", False)),
        limits=Limits(
            stop_after=int(merged.get("stop_after", 4)),
            pos_target=merged.get("pos_target"),
            labeling_limit=merged.get("labeling_limit")),
        bart=BartConfig(
            n_trees=int(merged.get("n_trees", 50)),
            n_iterations=int(merged.get("n_iterations", 2000)),
            n_burnin=int(merged.get("n_burnin", 250)),
            seed=int(merged.get("seed", 0))))


def _fail(message: str) -> None:
    click.echo(f"error: {message}", err=True)
    sys.exit(DOMAIN_EXIT)


@click.group()
@click.option("--workspace", "-w", default=".", show_default=True,
              type=click.Path(file_okay=False),
              help="Workspace root holding Records/, Sessions/ and the journal.")
@click.option("--config", "config_path", default=None,
              type=click.Path(exists=True, dir_okay=False),
              help="TOML config file with default option values.")
@click.pass_context
def cli(ctx, workspace, config_path):
    """Citation screening for systematic reviews."""
    cfg = _load_config(config_path)
    root = cfg.get("workspace", workspace)
    ctx.obj = {"ws": Workspace(Path(root)), "cfg": cfg}


def _httpx_transport():
    import httpx

    def transport(method, url, params):
        response = httpx.request(method, url, params=params, timeout=30.0)
        return response.status_code, dict(response.headers), response.content

    return transport


@cli.command()
@click.option("--session", required=True)
@click.option("--query-name", required=True)
@click.option("--query", "query_text", required=True,
              help="Boolean query, e.g. '(\"machine learning\") AND triage'.")
@click.option("--year", "year_text", default=None,
              help="Year filter: 2013, 2010-2020 or <=2015.")
@click.option("--actions", type=click.Choice(["search", "parse", "both"]),
              default="both", show_default=True)
@click.option("--source", "source_names", multiple=True,
              type=click.Choice(sorted(SOURCES)),
              help="API sources to search (repeatable); default: all API sources.")
@click.pass_obj
def search(obj, session, query_name, query_text, year_text, actions, source_names):
    """Run database searches and/or parse downloaded bibliography files."""
    try:
        ast = parse_query(query_text)
        year = parse_year_filter(year_text) if year_text else None
    except ValueError as exc:
        raise click.UsageError(str(exc))
    transports = {}
    if actions in ("search", "both"):
        names = source_names or [n for n, d in SOURCES.items() if d.supports_api]
        transport = _httpx_transport()
        transports = {name: transport for name in names}
    per_source, errors = perform_search_session(
        obj["ws"], session, query_name, ast, year=year, actions=actions,
        creds=ApiCredentials.from_env(), transports=transports)
    for name in sorted(per_source):
        click.echo(f"{name}: {len(per_source[name])} records")
    for name in sorted(errors):
        click.echo(f"{name}: FAILED ({errors[name]})", err=True)
    if errors:
        sys.exit(DOMAIN_EXIT)


@cli.command()
@click.option("--session", required=True)
@click.option("--query", "query_text", required=True,
              help="Query used to order records by match score.")
@click.option("--prev-session", default=None,
              help="Carry labels over from this session's latest annotation.")
@click.option("--files", "file_paths", multiple=True,
              type=click.Path(exists=True, dir_okay=False),
              help="Bibliography files to parse instead of the Records tree.")
@click.pass_obj
def annotate(obj, session, query_text, prev_session, file_paths):
    """Build a fresh annotation file from downloaded records."""
    ws = obj["ws"]
    try:
        ast = parse_query(query_text)
    except ValueError as exc:
        raise click.UsageError(str(exc))
    paths = [Path(p) for p in file_paths]
    if not paths:
        root = ws.records_root / session
        if root.is_dir():
            paths = sorted(p for p in root.rglob("*") if p.is_file())
    if not paths:
        _fail(f"no bibliography files for session {session!r}")
    records = []
    skipped = 0
    for path in paths:
        try:
            recs, bad = parse_bib_path(path)
        except ValueError as exc:
            _fail(str(exc))
        records.extend(recs)
        skipped += bad
    prev = None
    if prev_session:
        prev_path = latest_annotation(ws, prev_session)
        if prev_path is None:
            _fail(f"previous session {prev_session!r} has no annotation file")
        prev = read_annotation(prev_path)
    table = create_annotation_file(records, ast, prev_records=prev)
    out = write_annotation(ws, session, table)
    click.echo(f"{len(table)} records ({skipped} unparseable rows skipped) "
               f"-> {out}")


@cli.command()
@click.option("--session", required=True)
@click.option("--n-models", type=int, default=None)
@click.option("--oversample-mult", type=int, default=None)
@click.option("--resample/--no-resample", default=None)
@click.option("--quantiles", default=None, help="lo,med,hi e.g. 0.01,0.5,0.99")
@click.option("--stop-after", type=int, default=None)
@click.option("--pos-target", type=int, default=None)
@click.option("--labeling-limit", type=float, default=None,
              help="Absolute count or fraction of the corpus.")
@click.option("--seed", type=int, default=None)
@click.option("--stop-on-unreviewed/--ignore-unreviewed", default=True,
              show_default=True)
@click.pass_obj
def screen(obj, session, n_models, oversample_mult, resample, quantiles,
           stop_after, pos_target, labeling_limit, seed, stop_on_unreviewed):
    """Run one classify-review iteration for a session."""
    config = _ensemble_config(
        obj["cfg"], n_models=n_models, oversample_mult=oversample_mult,
        resample=resample, pred_quantiles=quantiles, stop_after=stop_after,
        pos_target=pos_target, labeling_limit=labeling_limit, seed=seed)
    try:
        result = run_cr_iteration(obj["ws"], session, config,
                                  stop_on_unreviewed=stop_on_unreviewed)
    except ScreeningError as exc:
        click.echo(f"{exc.status}: {exc}", err=True)
        sys.exit(DOMAIN_EXIT)
    click.echo(f"records: {result.n_records}  features: {result.n_features}")
    click.echo(f"labelled: {result.n_pos} y / {result.n_neg} n")
    click.echo(f"to review: {result.n_to_review}  "
               f"new positives: {result.n_new_positives}  "
               f"replications: {result.replications}")
    click.echo(f"uncertainty zone: [{result.zone_lower:.4f}, "
               f"{result.zone_upper:.4f}]")
    click.echo(f"annotation: {result.annotation_path}")


@cli.command()
@click.option("--session", required=True)
@click.pass_obj
def consolidate(obj, session):
    """Merge per-iteration result files into the consolidated results CSV."""
    paths = consolidate_results(obj["ws"], session)
    if not paths:
        _fail(f"session {session!r} has no results")
    click.echo(f"consolidated {len(paths)} result files")


@cli.command()
@click.option("--session", required=True)
@click.option("--importance-cutoff", type=float, default=10.0,
              show_default=True, help="Inclusion-rate floor per 10,000 draws.")
@click.option("--n-samples", type=int, default=800, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--finalize", is_flag=True,
              help="Read back the edited sheet and print the rendered query.")
@click.pass_obj
def querygen(obj, session, importance_cutoff, n_samples, seed, finalize):
    """Mine search rules from posterior draws; or finalize an edited sheet."""
    ws = obj["ws"]
    try:
        if finalize:
            out = service.finalize_rules(ws, session)
            for dialect in DIALECTS:
                click.echo(f"{dialect}: {out['rendered'][dialect]}")
            return
        sheet = service.generate_selection_sheet(
            ws, session, importance_cutoff=importance_cutoff,
            n_samples=n_samples, seed=seed)
    except (FileNotFoundError, ValueError, KeyError) as exc:
        _fail(str(exc))
    path = service.selection_sheet_path(ws, session)
    click.echo(f"{len(sheet)} candidate rules -> {path}")
    click.echo("mark selected_rule TRUE (optionally set edited_rule), then "
               "rerun with --finalize")


@cli.command()
@click.option("--session", required=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", "out_path", type=click.Path(dir_okay=False), default=None,
              help="Write the prediction curve CSV here.")
@click.pass_obj
def estimate(obj, session, seed, out_path):
    """Estimate recall and screening effort from the review history."""
    try:
        summary = estimate_performance(obj["ws"], session,
                                       SurrogateConfig(seed=seed))
    except (FileNotFoundError, ValueError) as exc:
        _fail(str(exc))
    frame = summary.to_frame()
    click.echo(frame.to_string(index=False))
    if not summary.converged:
        click.echo("warning: surrogate chains did not converge; intervals "
                   "suppressed", err=True)
    if out_path and summary.curve is not None:
        summary.curve.to_csv(out_path, index=False)
        click.echo(f"prediction curve -> {out_path}")


@cli.command()
@click.option("--grid", type=click.Choice(["default"]), default="default",
              show_default=True)
@click.option("--enumerate-only", is_flag=True,
              help="Write the grid combinations without running trials.")
@click.option("--out", "out_path", required=True,
              type=click.Path(dir_okay=False))
@click.option("--corpus", type=click.Path(exists=True, dir_okay=False),
              default=None, help="Annotation CSV with a fully labelled corpus.")
@click.option("--oracle", "oracle_path", type=click.Path(exists=True, dir_okay=False),
              default=None, help="JSON {record_id: y|n} truth labels.")
@click.option("--max-trials", type=int, default=None)
@click.option("--replicates", type=int, default=1, show_default=True)
@click.option("--n-trees", type=int, default=50, show_default=True)
@click.option("--n-iterations", type=int, default=2000, show_default=True)
@click.option("--n-burnin", type=int, default=250, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.pass_obj
def tune(obj, grid, enumerate_only, out_path, corpus, oracle_path, max_trials,
         replicates, n_trees, n_iterations, n_burnin, seed):
    """Grid-search screening hyperparameters on a fully labelled corpus."""
    spec = GridSpec()
    combos = enumerate_grid(spec)
    if enumerate_only:
        rows = [{**c, "pred_quants": ",".join(str(q) for q in c["pred_quants"])}
                for c in combos]
        pd.DataFrame(rows, columns=COMBO_FIELDS).to_csv(out_path, index=False)
        click.echo(f"{len(combos)} combinations -> {out_path}")
        return
    if corpus is None or oracle_path is None:
        raise click.UsageError("--corpus and --oracle are required unless "
                               "--enumerate-only is given")
    table = read_annotation(Path(corpus))
    oracle = json.loads(Path(oracle_path).read_text())
    bart = BartConfig(n_trees=n_trees, n_iterations=n_iterations,
                      n_burnin=n_burnin, seed=seed)
    if max_trials is not None:
        combos = combos[:max_trials]
    rows = []
    for i, combo in enumerate(combos):
        for rep in range(replicates):
            result = run_trial(table, oracle, combo, seed=seed + rep, bart=bart)
            rows.append({**result.to_row(), "replicate": rep})
        click.echo(f"[{i + 1}/{len(combos)}] {combo}", err=True)
    results = pd.DataFrame(rows)
    results.to_csv(out_path, index=False)
    report = analyse_grid(results)
    click.echo(report.clusters.to_string(index=False))
    click.echo(f"best combination: {report.best_row.to_dict()}")


@cli.command()
@click.option("--session", required=True)
@click.pass_obj
def report(obj, session):
    """Per-source and per-iteration summaries for a session."""
    ws = obj["ws"]
    journal = read_journal(ws.journal_path)
    iterations = summarise_iterations(ws, session)
    if journal.empty and iterations.empty:
        _fail(f"nothing to report for session {session!r}")
    path = latest_annotation(ws, session)
    if not journal.empty and path is not None:
        from .records import records_from_table
        corpus = records_from_table(read_annotation(path))
        sources = summarise_sources(journal[journal["session_name"] == session],
                                    corpus)
        click.echo("== sources ==")
        click.echo(sources.to_string(index=False))
        dist = get_source_distribution(corpus)
        click.echo("== records per number of sources ==")
        for n, count in dist.items():
            click.echo(f"{n}: {count}")
    if not iterations.empty:
        click.echo("== iterations ==")
        click.echo(iterations.to_string(index=False))


@cli.command()
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", type=int, default=8008, show_default=True)
@click.pass_obj
def serve(obj, host, port):
    """Serve the review web UI and the HTTP API."""
    import uvicorn

    from .api import create_app

    uvicorn.run(create_app(obj["ws"]), host=host, port=port, log_level="info")


def main():
    cli(prog_name="bayscreen")


if __name__ == "__main__":
    main()
