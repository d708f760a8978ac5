"""Deterministic model inference over manifest clips."""
import logging

import numpy as np

from core.augment import center_crop
from core.logits import LogitStore
from core.tensor import Tensor, no_grad

logger = logging.getLogger(__name__)


def crop_samples(frontend, crop_seconds):
    return int(round(crop_seconds * frontend.sample_rate))


def feature_batch(waveforms, frontend):
    """Stack log-mel features of equal-length clips into [N,1,F,T]."""
    return Tensor(np.stack([frontend.extract(w).values.data for w in waveforms]))


def predict_logits(model, manifest, records, frontend, crop_seconds=1.0, batch_size=32):
    """[len(records), K] logits from center crops, in eval mode without a tape."""
    crop = crop_samples(frontend, crop_seconds)
    was_training = model.training
    model.eval()
    chunks = []
    try:
        with no_grad():
            for start in range(0, len(records), batch_size):
                batch = records[start:start + batch_size]
                waves = [center_crop(manifest.load_clip(r, frontend.sample_rate), crop) for r in batch]
                chunks.append(model(feature_batch(waves, frontend)).data)
    finally:
        model.train(was_training)
    n_classes = model.config.n_classes
    return np.concatenate(chunks) if chunks else np.zeros((0, n_classes), dtype=np.float32)


def export_logits(model, manifest, split, frontend, crop_seconds=1.0, batch_size=32):
    """One store entry per clip of `split` (every clip when split is None)."""
    records = manifest.split(split)
    logits = predict_logits(model, manifest, records, frontend, crop_seconds, batch_size)
    store = LogitStore.from_arrays([r.clip_path for r in records], logits)
    logger.info("exported %d %s logits (K=%d)", len(store), split or "all", store.class_count)
    return store
