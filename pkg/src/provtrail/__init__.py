"""provtrail: provenance and metadata management for file-based projects.

Captures versioned snapshots and derivation metadata around shell commands,
stores them in an embedded property graph, and answers lineage, diff,
pipeline and monitoring queries through a CLI and a local HTTP service.
"""

__version__ = "0.1.0"
