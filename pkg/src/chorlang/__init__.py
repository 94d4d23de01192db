"""Choreographic programming toolkit: parser, protocol typing, endpoint projection and a
simulated network for checking that projected systems behave like their choreographies."""

from .epp import link, project
from .parser import parse, parse_file, parse_module
from .printer import pretty_print
from .runtime import check_equivalence, run
from .typecheck import check_module

__all__ = [
    "check_equivalence",
    "check_module",
    "link",
    "parse",
    "parse_file",
    "parse_module",
    "pretty_print",
    "project",
    "run",
]
