"""Benchmark harness: cases, error norms, runner, outputs and the CLI."""

from . import cases, errors, output, riemann, runner

__all__ = ["cases", "errors", "output", "riemann", "runner"]
