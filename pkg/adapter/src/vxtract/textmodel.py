"""Hidden-state extraction for causal language models.

Tokens are processed in growth runs that mirror the planner's windows:
one full forward pass opens each run, and every later token in the run
reuses the cached prefix, so a story costs O(n_tokens / reset_len) full
passes plus single-token steps. Per word, the representation is the
hidden state at its last sub-token (or the mean over its sub-tokens).

Tokenization convention (the adapter's own, applied uniformly): the
first word is encoded bare, every later word is encoded with one leading
space. Models whose tokenizers need different whitespace handling get an
entry in `WHITESPACE_RULES`.
"""

from dataclasses import dataclass
from itertools import groupby

import numpy as np
import torch

from .jobs import JobError, load_token_plan, load_transcript

# model_type -> joiner inserted before non-initial words
WHITESPACE_RULES = {"default": " "}


@dataclass
class TextExtraction:
    story: str
    hidden_states: dict  # layer -> (n_words, hidden) float32
    timestamps: np.ndarray  # (n_words,) word end times, seconds
    n_tokens: int
    n_full_passes: int
    n_cached_steps: int


def tokenize_words(tokenizer, words, model_type="default"):
    """Token ids for a story plus each word's (first, last) 1-based span."""
    joiner = WHITESPACE_RULES.get(model_type, WHITESPACE_RULES["default"])
    ids = []
    spans = []
    for i, timing in enumerate(words):
        text = timing.word if i == 0 else joiner + timing.word
        piece = tokenizer(text, add_special_tokens=False).input_ids
        if not piece:
            raise JobError(f"word {timing.word!r} tokenizes to nothing")
        spans.append((len(ids) + 1, len(ids) + len(piece)))
        ids.extend(piece)
    return ids, spans


def _validate_layers(layers, n_layers):
    for layer in layers:
        if not 1 <= layer <= n_layers:
            raise JobError(f"layer index {layer} out of range 1..{n_layers}")


def extract_token_states(model, ids, windows, layers):
    """Hidden state of every token under its planned window.

    Returns (per_token, n_full_passes, n_cached_steps) where per_token
    maps layer -> (n_tokens, hidden) float32. Consecutive windows sharing
    a start index form one growth run: the run opens with a full pass and
    each later target is a single cached step, which reproduces the
    fresh-window states because positions restart at the window origin.
    """
    if len(windows) != len(ids):
        raise JobError(f"plan covers {len(windows)} tokens but got {len(ids)} token ids")
    _validate_layers(layers, model.config.num_hidden_layers)
    max_window = max(end - max(start, 1) + 1 for start, end in windows)
    max_positions = getattr(model.config, "max_position_embeddings", None)
    if max_positions is not None and max_window > max_positions:
        raise JobError(
            f"windows up to {max_window} tokens exceed the model's "
            f"{max_positions} positions"
        )

    hidden = model.config.hidden_size
    per_token = {layer: np.empty((len(ids), hidden), dtype=np.float32) for layer in layers}
    full_passes = 0
    cached_steps = 0
    ids_tensor = torch.tensor(ids, dtype=torch.long)

    model.eval()
    with torch.no_grad():
        for start, group in groupby(enumerate(windows), key=lambda item: item[1][0]):
            run = list(group)
            first_target = run[0][1][1]
            lo = max(start, 1) - 1  # 0-based slice start into the story ids
            out = model(
                ids_tensor[lo:first_target][None, :],
                use_cache=True,
                output_hidden_states=True,
            )
            full_passes += 1
            for layer in layers:
                per_token[layer][first_target - 1] = (
                    out.hidden_states[layer][0, -1].float().numpy()
                )
            past = out.past_key_values
            for _, (_, target) in run[1:]:
                step = model(
                    ids_tensor[target - 1 : target][None, :],
                    past_key_values=past,
                    use_cache=True,
                    output_hidden_states=True,
                )
                cached_steps += 1
                past = step.past_key_values
                for layer in layers:
                    per_token[layer][target - 1] = (
                        step.hidden_states[layer][0, -1].float().numpy()
                    )
    return per_token, full_passes, cached_steps


def extract_text(job, model=None, tokenizer=None):
    """Run the plan against a causal LM and pool hidden states per word.

    `model` and `tokenizer` may be passed in to reuse loaded instances;
    otherwise they are loaded from the job's checkpoint directory.
    """
    from transformers import AutoModelForCausalLM, AutoTokenizer

    if tokenizer is None:
        tokenizer = AutoTokenizer.from_pretrained(job.model_dir)
    if model is None:
        model = AutoModelForCausalLM.from_pretrained(job.model_dir, dtype=torch.float32)

    story, words = load_transcript(job.transcript)
    ids, spans = tokenize_words(tokenizer, words, getattr(model.config, "model_type", "default"))
    windows = load_token_plan(job.plan)
    if len(windows) != len(ids):
        raise JobError(
            f"plan covers {len(windows)} tokens but the transcript tokenizes "
            f"to {len(ids)} tokens"
        )

    per_token, full_passes, cached_steps = extract_token_states(model, ids, windows, job.layers)

    pooled = {}
    for layer in job.layers:
        rows = np.empty((len(words), model.config.hidden_size), dtype=np.float32)
        for w, (first, last) in enumerate(spans):
            if job.word_pooling == "last":
                rows[w] = per_token[layer][last - 1]
            else:
                rows[w] = per_token[layer][first - 1 : last].mean(axis=0)
        pooled[layer] = rows

    return TextExtraction(
        story=story,
        hidden_states=pooled,
        timestamps=np.array([w.end for w in words], dtype=np.float64),
        n_tokens=len(ids),
        n_full_passes=full_passes,
        n_cached_steps=cached_steps,
    )
