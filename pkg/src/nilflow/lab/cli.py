"""``nilflow`` command line: run shipped or custom experiment configs."""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click

from ..errors import CacheError, ConfigInvalid, PrecisionExhausted
from .cache import OrbitCache, cache_gc, default_cache_dir
from .catalog import find_experiment, list_experiments
from .config import ExperimentConfig, load_config
from .runner import run, write_outputs

EXIT_CONFIG = 2
EXIT_NUMERIC = 3


def _resolve(config: str) -> Path:
    p = Path(config)
    if p.is_file():
        return p
    shipped = find_experiment(config)
    if shipped is None:
        raise ConfigInvalid(f"no such config file or shipped experiment: {config}")
    return shipped


@click.group()
def main():
    """Equidistribution experiments for Hardy sequences on nilmanifolds."""


@main.command("run")
@click.argument("config")
@click.option("--out-dir", type=click.Path(file_okay=False), default=None,
              help="Output directory (default: the config's out_dir, else ./results).")
@click.option("--threads", type=click.IntRange(1, 256), default=1, show_default=True)
@click.option("--precision-bits", type=click.IntRange(64, 4096), default=None,
              help="Override the config's working precision.")
@click.option("--seed", type=click.IntRange(0), default=None, help="Override the config's seed.")
@click.option("--no-cache", is_flag=True, help="Compute everything afresh.")
@click.option("--cache-dir", type=click.Path(file_okay=False), default=None,
              help="Cache location (default: $NILFLOW_CACHE or ~/.cache/nilflow).")
@click.option("--timings", is_flag=True, help="Fill the seconds column (makes the CSV non-reproducible).")
def run_cmd(config, out_dir, threads, precision_bits, seed, no_cache, cache_dir, timings):
    """Run CONFIG (a JSON path or a shipped experiment name)."""
    try:
        cfg = load_config(_resolve(config))
        cache = None if no_cache else OrbitCache(cache_dir)
        report = run(cfg, threads=threads, cache=cache, bits=precision_bits, seed=seed)
    except ConfigInvalid as e:
        click.echo(f"config error: {e}", err=True)
        sys.exit(EXIT_CONFIG)
    except PrecisionExhausted as e:
        click.echo(f"numeric failure: {e}", err=True)
        sys.exit(EXIT_NUMERIC)
    except CacheError as e:
        raise click.ClickException(str(e)) from None
    dest = write_outputs(report, out_dir or cfg.out_dir or "results", timings=timings)
    click.echo(f"{cfg.name}: {len(report.rows)} rows in {report.seconds:.1f}s -> {dest}")
    if report.escalations:
        click.echo(f"precision escalations: {report.escalations}")
    if report.failures:
        click.echo(f"{report.failures} rows failed (precision exhausted)", err=True)
        sys.exit(EXIT_NUMERIC)


@main.command("list")
def list_cmd():
    """Show the shipped experiments and the claim each one checks."""
    for e in list_experiments():
        click.echo(f"{e.name:24s} {e.kind:17s} {e.claim}")


@main.command("gc")
@click.option("--max-bytes", type=click.IntRange(0), required=True)
@click.option("--cache-dir", type=click.Path(file_okay=False), default=None)
def gc_cmd(max_bytes, cache_dir):
    """Evict least recently used cache entries down to MAX_BYTES."""
    try:
        freed = cache_gc(cache_dir or default_cache_dir(), max_bytes)
    except CacheError as e:
        raise click.ClickException(str(e)) from None
    click.echo(f"freed {freed} bytes")


@main.command("schema")
def schema_cmd():
    """Print the JSON schema of experiment configs."""
    click.echo(json.dumps(ExperimentConfig.model_json_schema(), indent=2))


if __name__ == "__main__":
    main()
