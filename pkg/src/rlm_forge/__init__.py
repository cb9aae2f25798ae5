"""Recursive LM sessions over a sandboxed text REPL.

The long input lives as the ``prompt`` variable inside a purpose-built
script sandbox; a root model drives exploration by emitting fenced
scripts and may recurse into sub-model calls within a configurable depth
budget. Benchmark generation, scoring, failure tagging, and token/cost
accounting round out the harness.
"""
from .backends import (
    AuthError,
    BackendConfig,
    BackendError,
    BackendReply,
    ChatMessage,
    FixtureExhausted,
    HttpBackend,
    ProviderError,
    RateLimited,
    ReplayBackend,
    RequestTimeout,
    RuleAgentBackend,
    TokenUsage,
    TransportError,
    make_mock_backend,
)
from .benchhub import (
    BenchSample,
    ExactLabel,
    ExactText,
    Gold,
    InsufficientRecords,
    LengthFilter,
    MalformedLine,
    Numeric,
    generate_sniah,
    load_jsonl,
    score_answer,
    score_numeric,
)
from .metrics import (
    AggregateRow,
    CostModel,
    EmptyGroup,
    FAILURE_TAGS,
    SampleRecord,
    UnknownModel,
    aggregate,
    compute_cost,
    read_records,
    recompute_first_n,
    render_csv,
    render_json,
    render_svg,
    tag_failures,
    write_records,
)
from .orchestrator import (
    RecursionBudget,
    SessionConfig,
    SessionResult,
    TraceEvent,
    default_system_template,
    run_session,
)
from .parsing import (
    FinalMarker,
    ParsedResponse,
    find_code_blocks,
    find_final_answer,
    parse_response,
    strip_think_tags,
)
from .script import (
    Environment,
    ExecOutcome,
    ParseError,
    PatternError,
    SandboxLimits,
    ScriptProgram,
    execute,
    parse_script,
)

__version__ = "0.1.0"
