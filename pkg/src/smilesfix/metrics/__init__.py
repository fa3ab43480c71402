from smilesfix.metrics.descriptors import DESCRIPTOR_NAMES, descriptor_vector
from smilesfix.metrics.distribution import GaussianSummary, frechet_distance, kde_1d, pca_project
from smilesfix.metrics.fingerprints import Fingerprint, morgan_fingerprint, snn, tanimoto
from smilesfix.metrics.report import METRICS_REPORT_SCHEMA, MetricsReport, ReferenceSet, compute_report, uniqueness_at_k
from smilesfix.metrics.scaffolds import murcko_scaffold, scaffold_novelty, scaffold_string

__all__ = [
    "DESCRIPTOR_NAMES", "Fingerprint", "GaussianSummary", "METRICS_REPORT_SCHEMA", "MetricsReport",
    "ReferenceSet", "compute_report", "descriptor_vector", "frechet_distance", "kde_1d",
    "morgan_fingerprint", "murcko_scaffold", "pca_project", "scaffold_novelty", "scaffold_string",
    "snn", "tanimoto", "uniqueness_at_k",
]
