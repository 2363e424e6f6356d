"""Hold-n simultaneous speech translation: streaming policy, toy models, metrics, harness."""

from .adapter import (
    AdapterConfig,
    ConvSpec,
    FeatureMatrix,
    StoredFrameEncoder,
    adapt,
    conv1d_forward,
    default_adapter,
    mock_encode,
    output_length,
)
from .decoding import (
    Hypothesis,
    PromptSequence,
    ReadoutModel,
    TableModel,
    WhitespaceTokenizer,
    beam_search,
    compose_template,
    table_model_next,
)
from .errors import ConfigError, ContractError, ManifestError, RangeError, ShapeError
from .metrics import (
    BleuReport,
    DelaySeries,
    LatencyReport,
    aggregate,
    average_lagging,
    corpus_bleu,
    laal,
    laal_ca,
    latency_report,
)
from .policy import (
    PolicyConfig,
    PrunedPrefix,
    ReadAction,
    StreamSession,
    fixed_cost,
    run_stream,
    selective_output,
    step,
    wall_cost,
)
from .stream import (
    AgentAction,
    ChunkSchedule,
    CommitLog,
    SpeechStream,
    build_schedule,
    commit,
    frames_available,
)

__version__ = "0.1.0"
