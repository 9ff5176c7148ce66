# Copyright 2026 The dmix Authors
# SPDX-License-Identifier: Apache-2.0
"""Python access to the dmix sampler, smoothing and metrics."""

import json
import os

from ._core import (
    ConfigError,
    DmixError,
    SamplingFailure,
    alpha_bar,
    flicker,
    gaussian_w2,
    p_video,
    policy_preset,
    smoothing_mask,
    step_map,
    temporal_smooth,
    version,
)
from . import _core

__all__ = [
    "ConfigError",
    "DmixError",
    "SamplingFailure",
    "alpha_bar",
    "compute_metrics",
    "flicker",
    "gaussian_w2",
    "p_video",
    "policy_preset",
    "sample",
    "smoothing_mask",
    "step_map",
    "temporal_smooth",
    "version",
]


def sample(config, chain=0, base_dir="."):
    """Run one chain of a run config (dict or JSON string).

    Returns the final latent as a (frames, channels, height, width) array and
    the per-step trace as a list of dicts.
    """
    text = config if isinstance(config, str) else json.dumps(config)
    latent, trace = _core._sample_chain(text, chain, os.fspath(base_dir))
    return latent, [json.loads(line) for line in trace.splitlines() if line]


def compute_metrics(samples, lags=(1,), target=None):
    """Metric report for a list of equally shaped latents, keyed by metric name."""
    target_json = None if target is None else (target if isinstance(target, str) else json.dumps(target))
    report = json.loads(_core._metrics_json(list(samples), list(lags), target_json))
    return {m["name"]: m for m in report["metrics"]}
