"""Hidden-state extraction for audio encoder models.

Audio models are bidirectional, so every window gets a fresh forward
pass. Two input conventions are supported: log-mel models (Whisper
family) go through their saved feature extractor, raw-waveform models
(HuBERT/WavLM family) consume samples directly. In both cases the
window's representation is the hidden state at the final position that
corresponds to real window content, per requested layer, and the
timestamp is the window's end time. Encoder-decoder checkpoints expose
only their encoder here.
"""

from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch

from .jobs import JobError, load_audio_plan
from .tensorio import MAGIC, read_tensor


@dataclass
class AudioExtraction:
    hidden_states: dict  # layer -> (n_windows, hidden) float32
    timestamps: np.ndarray  # (n_windows,) window end times, seconds


def load_waveform(path, expected_rate):
    """Mono float32 samples from a WAV file or a raw tensor file."""
    path = Path(path)
    with open(path, "rb") as fh:
        head = fh.read(4)
    if head == MAGIC:
        data = read_tensor(path).astype(np.float32).ravel()
        return data
    from scipy.io import wavfile

    rate, data = wavfile.read(path)
    if rate != expected_rate:
        raise JobError(f"{path}: sample rate {rate} does not match expected {expected_rate}")
    if data.ndim > 1:
        data = data.mean(axis=1)
    if np.issubdtype(data.dtype, np.integer):
        data = data.astype(np.float32) / float(np.iinfo(data.dtype).max)
    return data.astype(np.float32)


def _validate_layers(layers, n_layers):
    for layer in layers:
        if not 1 <= layer <= n_layers:
            raise JobError(f"layer index {layer} out of range 1..{n_layers}")


def extract_audio(job, model=None):
    """Run the audio window plan against an encoder and collect states."""
    from transformers import AutoConfig, AutoModel

    config = AutoConfig.from_pretrained(job.model_dir)
    if getattr(config, "is_encoder_decoder", False) and job.component != "encoder":
        raise JobError(
            f"encoder-only: {config.model_type} is an encoder-decoder model; "
            f"component {job.component!r} is not extractable"
        )
    if model is None:
        model = AutoModel.from_pretrained(job.model_dir, dtype=torch.float32)
    model.eval()

    samples = load_waveform(job.waveform, job.sample_rate)
    windows = load_audio_plan(job.plan)
    if not windows:
        raise JobError("audio plan is empty")
    duration = samples.size / job.sample_rate
    if windows[-1][1] > duration + 1e-6:
        raise JobError(
            f"plan runs to {windows[-1][1]:.2f} s but the waveform lasts {duration:.2f} s"
        )

    mel_style = getattr(config, "is_encoder_decoder", False)
    if mel_style:
        from transformers import AutoFeatureExtractor

        feature_extractor = AutoFeatureExtractor.from_pretrained(job.model_dir)
        encoder = model.get_encoder()
        n_layers = config.encoder_layers
    else:
        encoder = model
        n_layers = config.num_hidden_layers
    _validate_layers(job.layers, n_layers)

    hidden = getattr(config, "d_model", None) or config.hidden_size
    out = {layer: np.empty((len(windows), hidden), dtype=np.float32) for layer in job.layers}
    timestamps = np.empty(len(windows), dtype=np.float64)

    with torch.no_grad():
        for i, (t_start, t_end) in enumerate(windows):
            lo = max(int(round(t_start * job.sample_rate)), 0)
            hi = min(int(round(t_end * job.sample_rate)), samples.size)
            clip = samples[lo:hi]
            if clip.size == 0:
                raise JobError(f"window [{t_start}, {t_end}] selects no samples")
            if mel_style:
                feats = feature_extractor(
                    clip, sampling_rate=job.sample_rate, return_tensors="pt"
                ).input_features
                states = encoder(feats, output_hidden_states=True).hidden_states
                content_frames = clip.size // feature_extractor.hop_length
                final = max(content_frames // 2 - 1, 0)  # conv stack halves the frame rate
            else:
                states = encoder(
                    torch.from_numpy(clip)[None, :], output_hidden_states=True
                ).hidden_states
                final = states[0].shape[1] - 1
            for layer in job.layers:
                out[layer][i] = states[layer][0, final].float().numpy()
            timestamps[i] = t_end

    return AudioExtraction(hidden_states=out, timestamps=timestamps)
