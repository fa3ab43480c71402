"""SMILES validity correction: dialect core, metrics, transformer models and pipeline."""

__version__ = "0.1.0"
