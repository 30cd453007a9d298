"""Shipped experiment configs and the claim each one reproduces."""

from __future__ import annotations

from dataclasses import dataclass
from importlib import resources
from pathlib import Path

from .config import CLAIMS, ExperimentConfig, load_config

__all__ = ["CatalogEntry", "list_experiments", "find_experiment", "configs_dir"]


@dataclass(frozen=True)
class CatalogEntry:
    name: str
    path: Path
    kind: str
    claim: str
    description: str

    @property
    def claim_text(self) -> str:
        return CLAIMS[self.claim]


def configs_dir() -> Path:
    return Path(str(resources.files("nilflow.lab") / "configs"))


def list_experiments() -> list[CatalogEntry]:
    """Every shipped config, validated, sorted by name."""
    out = []
    for p in sorted(configs_dir().glob("*.json")):
        cfg: ExperimentConfig = load_config(p)
        out.append(CatalogEntry(cfg.name, p, cfg.kind, cfg.claim, cfg.description))
    return out


def find_experiment(name: str) -> Path | None:
    p = configs_dir() / f"{name.removesuffix('.json')}.json"
    return p if p.is_file() else None
