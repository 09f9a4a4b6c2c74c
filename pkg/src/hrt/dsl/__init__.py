"""Textual front end for hybrid real-time models (``.hrt`` files)."""

from hrt.dsl.parser import parse_expr, parse_model
from hrt.dsl.printer import print_model
from hrt.dsl.resolver import resolve

__all__ = ["parse_expr", "parse_model", "print_model", "resolve"]
