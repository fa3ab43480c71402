from smilesfix.smiles.canonical import canonical_smiles, canonicalize
from smilesfix.smiles.chem import ValidityVerdict, check_valence, is_valid, kekulize, validate
from smilesfix.smiles.graph import MolGraph, parse
from smilesfix.smiles.tokenizer import TokenSequence, detokenize, pad_sequence, tokenize
from smilesfix.smiles.vocab import VOCAB, Vocabulary

__all__ = ["canonical_smiles", "canonicalize", "ValidityVerdict", "check_valence", "is_valid", "kekulize",
           "validate", "MolGraph", "parse", "TokenSequence", "detokenize", "pad_sequence", "tokenize",
           "VOCAB", "Vocabulary"]
