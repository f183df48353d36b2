"""Security data orchestration, analysis and reporting.

Ingest heterogeneous security-tool telemetry, integrate it through a
semantic model, evaluate security metrics and render reports.
"""

__version__ = "0.1.0"

from .composition import (
    CompositionRequest,
    ToolRegistry,
    check_composition,
    derive_compositions,
    register_tool,
    subsumes,
)
from .ingest import (
    FieldMapping,
    IntermediateStore,
    RawRecord,
    normalize,
    parse_jsonl_mapped,
    parse_snort_fast,
    parse_zeek_conn,
    store_intermediate,
)
from .metrics import (
    LoginAggregate,
    aggregate_login_attempts,
    availability_uptime,
    detect_dos_ddos,
    metric_catalog,
    ratio_metric,
    window_rates,
)
from .model import (
    Auth,
    DataKind,
    Finding,
    MetricSpec,
    Report,
    SecurityEvent,
    SecurityTag,
    ToolDescriptor,
    TrafficRecord,
    Window,
    validate_record,
)
from .orchestration import PipelineConfig, run_pipeline, tag_data
from .reporting import (
    build_invalid_access_summary,
    build_source_summary,
    build_target_summary,
    render_report,
)
from .semantic import KnowledgeBase, SemanticIntegrationModel, integrate, record_to_triples
from .simgen import generate_trace
