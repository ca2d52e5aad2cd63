"""Dual-path SIMT toolchain: warp collectives as ISA extensions versus
parallel-region loop serialization, measured on a cycle-approximate core."""

__version__ = "0.1.0"
