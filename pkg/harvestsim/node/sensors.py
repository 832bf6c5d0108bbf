"""Synthetic environmental readings for the node's sensor channels."""
from __future__ import annotations

import math

import numpy as np

from ..models import ALL_CHANNELS, EnvironmentModel, NodeConfig, SensorSample


def read_sensors(cfg: NodeConfig, env: EnvironmentModel, t: float) -> SensorSample:
    """Sample every configured channel at time ``t``; unconfigured channels read None.

    The reading is a daily sinusoid around the channel baseline plus optional
    Gaussian noise seeded from (environment seed, channel, t in ms), so the same
    inputs always give the same sample.
    """
    values: dict[str, float | None] = {}
    for index, channel in enumerate(ALL_CHANNELS):
        if channel not in cfg.sensors:
            values[channel.value] = None
            continue
        spec = env.channels.get(channel)
        if spec is None:
            raise ValueError(f"environment has no model for channel {channel.value}")
        value = spec.baseline + spec.amplitude * math.sin(2.0 * math.pi * t / spec.period_s)
        if spec.noise_sd > 0:
            rng = np.random.default_rng([env.seed, index, int(round(t * 1000))])
            value += float(rng.normal(0.0, spec.noise_sd))
        values[channel.value] = float(np.clip(value, spec.low, spec.high))
    return SensorSample(timestamp=t, **values)
