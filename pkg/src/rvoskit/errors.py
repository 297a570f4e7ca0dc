"""Exception hierarchy shared by every module in the toolkit."""


class RvosError(Exception):
    """Base class for domain errors (CLI exit code 1)."""


class FormatError(RvosError):
    """A raster or manifest file could not be decoded or violates its format."""


class DimensionError(RvosError, ValueError):
    """Two rasters that must share geometry do not."""


class ManifestError(RvosError):
    """Manifest schema violation, missing file or duplicate sequence key."""


class ConfigError(RvosError):
    """Invalid pipeline configuration or command template."""


class PipelineHalted(RvosError):
    """An external command failed; the pipeline state was persisted as halted."""
