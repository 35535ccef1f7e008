"""Shared fixtures: the bundled organism, compiled once per session."""

from pathlib import Path

import pytest

from ortus import BuildConfig, build, parse_source
from ortus.cli import asset_path

ASSETS = Path(asset_path("ortus.ort")).parent


@pytest.fixture(scope="session")
def organism_source() -> str:
    return (ASSETS / "ortus.ort").read_text()


@pytest.fixture(scope="session")
def organism_spec(organism_source):
    return parse_source(organism_source)


@pytest.fixture(scope="session")
def organism_net(organism_spec):
    return build(organism_spec, BuildConfig())


@pytest.fixture(scope="session")
def conditioning_protocol_path() -> Path:
    return ASSETS / "fear_conditioning.protocol"
