from .operators import (
    ExternalOperator,
    OperatorModel,
    PosteriorStreamOperator,
    ScheduledOperator,
    ScriptedOperator,
    random_command_schedule,
)
from .manual import ManualConfig, ManualController
from .sim import BoundsExit, SimConfig, SimRun
from .experiments import (
    COURSE_TARGETS,
    TARGET_RADIUS,
    ExperimentConfig,
    bundle_for,
    comparison_ratios,
    run_manual_baseline,
    run_map_eval,
    run_target_course,
)
from .reports import (
    CSV_COLUMNS,
    METRICS_FORMAT,
    RunMetrics,
    export_metrics,
    export_rows,
    import_metrics,
    metrics_from_dict,
    metrics_to_dict,
    read_replay_log,
    replay_metrics,
    write_replay_log,
)

__all__ = [
    "BoundsExit",
    "COURSE_TARGETS",
    "CSV_COLUMNS",
    "ExperimentConfig",
    "ExternalOperator",
    "ManualConfig",
    "ManualController",
    "METRICS_FORMAT",
    "OperatorModel",
    "PosteriorStreamOperator",
    "RunMetrics",
    "ScheduledOperator",
    "ScriptedOperator",
    "SimConfig",
    "SimRun",
    "TARGET_RADIUS",
    "bundle_for",
    "comparison_ratios",
    "export_metrics",
    "export_rows",
    "import_metrics",
    "metrics_from_dict",
    "metrics_to_dict",
    "random_command_schedule",
    "read_replay_log",
    "replay_metrics",
    "run_manual_baseline",
    "run_map_eval",
    "run_target_course",
    "write_replay_log",
]
