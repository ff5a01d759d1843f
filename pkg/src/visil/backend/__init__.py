from .api import ApiBackend, content_parts, context_summary_format
from .base import Backend, GenerateResult, KeywordScores, ModelRoles
from .dispatch import RateLimiter, rate_limited_dispatch
from .synthetic import SyntheticBackend, ToyWorld, synthetic_score_keywords
from .transport import (
    API_KEY_ENV,
    HttpTransport,
    ReplayTransport,
    Transport,
    canonical_json,
    fixture_key,
    request_key,
)

__all__ = [
    "ApiBackend",
    "Backend",
    "GenerateResult",
    "HttpTransport",
    "KeywordScores",
    "ModelRoles",
    "RateLimiter",
    "ReplayTransport",
    "SyntheticBackend",
    "ToyWorld",
    "Transport",
    "API_KEY_ENV",
    "canonical_json",
    "content_parts",
    "context_summary_format",
    "fixture_key",
    "rate_limited_dispatch",
    "request_key",
    "synthetic_score_keywords",
]
