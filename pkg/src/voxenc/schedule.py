"""Context-window planning for feature extraction.

Causal language models use a dynamic context: the window grows with the
story until it holds `max_len` tokens, then resets so the target always
sees at least `reset_len` tokens of true prior context. Bidirectional
audio models use a fixed-size sliding window over the waveform. Both
planners are pure; they never touch a model or a tokenizer.
"""

from dataclasses import dataclass

from .errors import ValidationError

DEFAULT_MAX_CONTEXT = 512
DEFAULT_RESET_CONTEXT = 256

DEFAULT_AUDIO_WINDOW_SECONDS = 16.0
DEFAULT_AUDIO_STRIDE_SECONDS = 0.1


@dataclass(frozen=True)
class ContextWindow:
    """Token window feeding one hidden-state extraction.

    Token indices are 1-based. `token_start` = 0 means the window begins
    at story onset; otherwise the window includes tokens `token_start`
    through `token_end`, both ends inclusive. The hidden state is read at
    `target_token`, which is always the final token of the window.
    """

    token_start: int
    token_end: int
    target_token: int

    @property
    def n_tokens(self):
        first = self.token_start if self.token_start >= 1 else 1
        return self.token_end - first + 1


@dataclass(frozen=True)
class AudioWindow:
    """Waveform window in seconds; the representation timestamp is `t_end`."""

    t_start: float
    t_end: float


def window_for_token(i, max_len=DEFAULT_MAX_CONTEXT, reset_len=DEFAULT_RESET_CONTEXT):
    """Context window for the 1-based token index `i`.

    Windows start at onset until they hold `max_len` tokens; beyond that
    the start jumps forward in `reset_len` steps, so the window length
    stays within [reset_len + 1, max_len].
    """
    if i < 1:
        raise ValidationError(f"token index must be >= 1, got {i}")
    if i <= max_len:
        start = 0
    else:
        start = reset_len * (i // reset_len) - reset_len
    return ContextWindow(token_start=start, token_end=i, target_token=i)


def plan_story_tokens(n_tokens, max_len=DEFAULT_MAX_CONTEXT, reset_len=DEFAULT_RESET_CONTEXT):
    """One window per token of a story.

    Consecutive windows sharing a `token_start` form growth runs: within a
    run each target extends the previous window by one token, so cached
    prefixes make extraction a single forward pass per token.
    """
    if n_tokens < 1:
        raise ValidationError(f"n_tokens must be >= 1, got {n_tokens}")
    return [window_for_token(i, max_len, reset_len) for i in range(1, n_tokens + 1)]


def plan_audio_windows(
    duration_seconds,
    window_seconds=DEFAULT_AUDIO_WINDOW_SECONDS,
    stride_seconds=DEFAULT_AUDIO_STRIDE_SECONDS,
):
    """Sliding windows ending at every stride multiple up to the duration.

    Windows that would begin before the recording are clipped at 0.
    """
    if duration_seconds <= 0:
        raise ValidationError("duration must be positive")
    if stride_seconds <= 0:
        raise ValidationError("stride must be positive")
    if window_seconds <= 0:
        raise ValidationError("window must be positive")
    count = int(duration_seconds / stride_seconds + 1e-9)
    windows = []
    for k in range(1, count + 1):
        t_end = k * stride_seconds
        windows.append(AudioWindow(t_start=max(0.0, t_end - window_seconds), t_end=t_end))
    return windows


def token_plan_document(n_tokens, max_len=DEFAULT_MAX_CONTEXT, reset_len=DEFAULT_RESET_CONTEXT):
    """JSON-ready plan consumed by extraction adapters."""
    plan = plan_story_tokens(n_tokens, max_len, reset_len)
    return {
        "kind": "tokens",
        "max_context": max_len,
        "reset_context": reset_len,
        "windows": [
            {"target": w.target_token, "start": w.token_start, "end": w.token_end}
            for w in plan
        ],
    }


def audio_plan_document(
    duration_seconds,
    window_seconds=DEFAULT_AUDIO_WINDOW_SECONDS,
    stride_seconds=DEFAULT_AUDIO_STRIDE_SECONDS,
):
    """JSON-ready audio window plan; timestamps are the window end times."""
    plan = plan_audio_windows(duration_seconds, window_seconds, stride_seconds)
    return {
        "kind": "audio",
        "window_seconds": window_seconds,
        "stride_seconds": stride_seconds,
        "windows": [{"start": w.t_start, "end": w.t_end} for w in plan],
    }
