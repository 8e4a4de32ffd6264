from .metrics import (
    MetricsReport,
    accuracy,
    ap_over_runs,
    average_precision,
    confusion_matrix,
    f1_per_class,
    metrics_report,
    report_from_probabilities,
    subsample_ap_run,
)
from .protocols import (
    ABLATION_CONFIGS,
    PAIR_PRESETS,
    SUBSET_PRESETS,
    AblationTable,
    AttentionSummary,
    ablation_matrix,
    attention_report,
    class_subset_eval,
    export_report,
    read_predictions,
    subset_preset,
    write_predictions,
)
