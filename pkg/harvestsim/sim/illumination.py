"""Ambient illuminance over simulated time."""
from __future__ import annotations

import math
from bisect import bisect_right
from functools import lru_cache

import numpy as np

from ..models import ConstantIllumination, IlluminationProfile, SinusoidIllumination, StepIllumination


def lux_at(profile: IlluminationProfile, t: float, *, horizon: float | None = None, seed: int = 0) -> float:
    """Illuminance in lux at time ``t``; never negative."""
    if t < 0 or (horizon is not None and t > horizon):
        raise ValueError(f"time {t} s outside the run [0, {horizon}]")

    if isinstance(profile, ConstantIllumination):
        if profile.jitter == 0:
            return profile.lux
        bucket = int(t // profile.jitter_period_s)
        return profile.lux * (1.0 + _jitter(seed, bucket, profile.jitter))

    if isinstance(profile, StepIllumination):
        starts = [start for start, _ in profile.steps]
        return profile.steps[bisect_right(starts, t) - 1][1]

    if isinstance(profile, SinusoidIllumination):
        value = profile.mean + profile.amplitude * math.sin(2.0 * math.pi * t / profile.period_s)
        return max(value, 0.0)

    raise TypeError(f"unsupported illumination profile {type(profile).__name__}")


@lru_cache(maxsize=4096)
def _jitter(seed: int, bucket: int, spread: float) -> float:
    rng = np.random.default_rng([seed, 2, bucket])
    return float(rng.uniform(-spread, spread))
