from __future__ import annotations

import sys
from pathlib import Path

import pytest

import chorlang
from chorlang.parser import parse_module
from chorlang.runtime import load_scenario

sys.path.insert(0, str(Path(__file__).parent))

CORPUS = Path(chorlang.__file__).parent / "corpus"


def corpus_text(name: str) -> str:
    return (CORPUS / name).read_text(encoding="utf-8")


def corpus_module(name: str):
    return parse_module(corpus_text(name), name)


def corpus_scenario(name: str):
    return load_scenario(CORPUS / name)


@pytest.fixture
def listing():
    return corpus_module("listing.chor")


@pytest.fixture
def jfs():
    return corpus_module("jfs.chor")
