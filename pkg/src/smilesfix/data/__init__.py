from smilesfix.data.corpus import CorpusManifest, load_corpus, read_smiles, write_smiles
from smilesfix.data.corruption import CorruptionSpec, Edit, corrupt
from smilesfix.data.pairs import PairRecord, merge_pairs, read_pairs, write_pairs
from smilesfix.data.splits import scaffold_split

__all__ = ["CorpusManifest", "load_corpus", "read_smiles", "write_smiles", "CorruptionSpec", "Edit",
           "corrupt", "PairRecord", "merge_pairs", "read_pairs", "write_pairs", "scaffold_split"]
