from alaas.pipeline.dataflow import (
    Pipeline,
    check_query,
    run_baseline_dataflow,
    run_round,
    run_rounds,
)
from alaas.pipeline.stages import (
    MODES,
    PipelineSpec,
    SampleSource,
    StageDelays,
    StageEvent,
    SyntheticSource,
    byte_histogram,
    compute_metrics,
    get_preprocessor,
    preprocess,
    read_trace,
    register_preprocessor,
    split_interval,
    write_trace,
)

__all__ = [
    "MODES",
    "Pipeline",
    "PipelineSpec",
    "SampleSource",
    "StageDelays",
    "StageEvent",
    "SyntheticSource",
    "byte_histogram",
    "check_query",
    "compute_metrics",
    "get_preprocessor",
    "preprocess",
    "read_trace",
    "register_preprocessor",
    "run_baseline_dataflow",
    "run_round",
    "run_rounds",
    "split_interval",
    "write_trace",
]
