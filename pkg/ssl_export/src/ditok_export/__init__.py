"""Thin adapter dumping pretrained-model features into workbench formats."""

__version__ = "0.1.0"

from .exporter import ExportSpec, export_codec_tokens, export_embeddings  # noqa: F401
