"""Toolkit for referring video object segmentation experiments.

Evaluation (J, F, J&F), multi-scale + flip test-time-augmentation fusion,
triangular cyclical learning-rate schedules and a resumable pseudo-label
self-training pipeline that drives an external model through commands.
"""
from .clr import ScheduleSpec, emit_schedule, lr_at
from .errors import ConfigError, DimensionError, FormatError, ManifestError, RvosError
from .geometry import Dims, hflip_mask, hflip_prob, resize_bilinear, resize_nearest, target_dims
from .manifest import LabelSource, Manifest, SequenceEntry, inject_pseudo, load_manifest, merge, save_manifest, stats
from .metrics import FrameScore, MetricReport, aggregate, boundary_f, eval_sequence, jaccard, rank_table
from .raster import read_mask, read_pfm, write_mask, write_pfm
from .selftrain import PipelineConfig, PipelineState, load_config, plan, render_command, run_all, run_step
from .tta import AugmentationSpec, AugmentedOutput, enumerate_augs, fuse, invert

__version__ = "0.1.0"
