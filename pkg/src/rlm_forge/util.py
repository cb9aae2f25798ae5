"""Small shared helpers: token estimation and content digests."""
from __future__ import annotations

import hashlib
import math


def estimate_tokens(text: str) -> int:
    """Heuristic token count: ceil(code_points / 4).

    Used wherever a provider-specific tokenizer is unavailable (length
    filtering, usage fallback). Callers that rely on it must flag the
    value as an estimate.
    """
    if not text:
        return 0
    return math.ceil(len(text) / 4)


def digest(text: str) -> str:
    """Stable short fingerprint of a text: sha256 prefix plus length."""
    h = hashlib.sha256(text.encode("utf-8")).hexdigest()[:16]
    return f"sha256:{h}/{len(text)}cp"


def sha256_hex(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def preview(text: str, limit: int = 160) -> str:
    """First ``limit`` code points, with an ellipsis marker when cut."""
    if len(text) <= limit:
        return text
    return text[:limit] + "..."
