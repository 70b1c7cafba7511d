from prisonsim.gateway.chat import (
    ChatBackend,
    ChatMessage,
    ChatRequest,
    MockChatBackend,
    OllamaChatClient,
    TurnKey,
    backend_from_spec,
)
from prisonsim.gateway.ratelimit import TokenBucket, call_with_retry
from prisonsim.gateway.scoring import (
    PROXIES,
    HttpScorer,
    Lexicon,
    LexiconScorer,
    ModerationClient,
    ScoreRecord,
    ToxicityClient,
    lexicon_score,
)

__all__ = [
    "ChatBackend",
    "ChatMessage",
    "ChatRequest",
    "HttpScorer",
    "Lexicon",
    "LexiconScorer",
    "MockChatBackend",
    "ModerationClient",
    "OllamaChatClient",
    "PROXIES",
    "ScoreRecord",
    "TokenBucket",
    "ToxicityClient",
    "TurnKey",
    "backend_from_spec",
    "call_with_retry",
    "lexicon_score",
]
