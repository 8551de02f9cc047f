import json
import os

import numpy as np
import pytest
import torch

os.environ.setdefault("HF_HUB_OFFLINE", "1")
os.environ.setdefault("TRANSFORMERS_OFFLINE", "1")

WORDS = (
    "the quick brown fox jumps over a lazy dog while distant thunder "
    "rolls across wide valleys and rivers carry old stories toward the sea"
).split()


@pytest.fixture(scope="session")
def tiny_lm_dir(tmp_path_factory):
    """Seeded tiny causal LM checkpoint with a locally trained tokenizer."""
    from tokenizers import Tokenizer, models, pre_tokenizers, trainers
    from transformers import GPT2Config, GPT2LMHeadModel, PreTrainedTokenizerFast

    out = tmp_path_factory.mktemp("tiny_lm")
    tok = Tokenizer(models.BPE(unk_token="<unk>"))
    tok.pre_tokenizer = pre_tokenizers.ByteLevel(add_prefix_space=False)
    trainer = trainers.BpeTrainer(vocab_size=220, special_tokens=["<unk>"])
    tok.train_from_iterator([" ".join(WORDS) * 10], trainer)
    fast = PreTrainedTokenizerFast(tokenizer_object=tok, unk_token="<unk>")
    fast.save_pretrained(out)

    torch.manual_seed(1234)
    config = GPT2Config(
        vocab_size=max(fast.vocab_size, len(fast)) + 4,
        n_positions=1024,
        n_embd=32,
        n_layer=3,
        n_head=2,
        bos_token_id=0,
        eos_token_id=0,
    )
    GPT2LMHeadModel(config).save_pretrained(out)
    return out


@pytest.fixture(scope="session")
def tiny_whisper_dir(tmp_path_factory):
    """Seeded tiny speech encoder-decoder checkpoint (log-mel input)."""
    from transformers import WhisperConfig, WhisperFeatureExtractor, WhisperModel

    out = tmp_path_factory.mktemp("tiny_whisper")
    torch.manual_seed(99)
    config = WhisperConfig(
        vocab_size=100,
        d_model=32,
        encoder_layers=2,
        encoder_attention_heads=2,
        decoder_layers=2,
        decoder_attention_heads=2,
        encoder_ffn_dim=64,
        decoder_ffn_dim=64,
        num_mel_bins=80,
        max_source_positions=200,  # matches a 4 s feature-extractor chunk
        max_target_positions=64,
        bos_token_id=0,
        eos_token_id=1,
        pad_token_id=2,
        decoder_start_token_id=3,
    )
    WhisperModel(config).save_pretrained(out)
    WhisperFeatureExtractor(chunk_length=4).save_pretrained(out)
    return out


@pytest.fixture(scope="session")
def tiny_wave_model_dir(tmp_path_factory):
    """Seeded tiny raw-waveform encoder checkpoint."""
    from transformers import Wav2Vec2Config, Wav2Vec2Model

    out = tmp_path_factory.mktemp("tiny_wave")
    torch.manual_seed(7)
    config = Wav2Vec2Config(
        hidden_size=32,
        num_hidden_layers=2,
        num_attention_heads=2,
        intermediate_size=64,
        conv_dim=(32, 32),
        conv_stride=(5, 2),
        conv_kernel=(10, 3),
    )
    Wav2Vec2Model(config).save_pretrained(out)
    return out


def make_transcript(path, n_words, story="story01", word_duration=0.4, rng_seed=0):
    rng = np.random.default_rng(rng_seed)
    words = []
    t = 0.0
    for i in range(n_words):
        word = WORDS[int(rng.integers(0, len(WORDS)))]
        words.append({"word": word, "start": round(t, 3), "end": round(t + word_duration, 3)})
        t += word_duration
    path.write_text(json.dumps({"story": story, "words": words}))
    return path


def token_plan_doc(n_tokens, max_len=512, reset_len=256):
    # mirrors the planner's published piecewise rule
    windows = []
    for i in range(1, n_tokens + 1):
        start = 0 if i <= max_len else reset_len * (i // reset_len) - reset_len
        windows.append({"target": i, "start": start, "end": i})
    return {
        "kind": "tokens",
        "max_context": max_len,
        "reset_context": reset_len,
        "windows": windows,
    }


def audio_plan_doc(duration, window=0.5, stride=0.25):
    count = int(duration / stride + 1e-9)
    return {
        "kind": "audio",
        "window_seconds": window,
        "stride_seconds": stride,
        "windows": [
            {"start": max(0.0, k * stride - window), "end": k * stride}
            for k in range(1, count + 1)
        ],
    }


@pytest.fixture
def write_json(tmp_path):
    def _write(name, doc):
        path = tmp_path / name
        path.write_text(json.dumps(doc))
        return path

    return _write
