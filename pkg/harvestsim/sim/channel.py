"""Independent per-frame loss on each link."""
from __future__ import annotations

import numpy as np

from ..models import ChannelModel, Frame


def deliver(frame: Frame, channel: ChannelModel, rng: np.random.Generator) -> bool:
    """True when the frame survives the link; one uniform draw per frame."""
    loss = channel.loss_for(frame.link)
    if loss <= 0.0:
        return True
    return float(rng.random()) >= loss
