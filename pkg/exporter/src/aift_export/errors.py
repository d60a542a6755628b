class ExportError(Exception):
    """Raised when an export cannot be completed (bad spec, missing dataset,
    backbone retrieval or inference failure)."""
