# Signal-level metrics and corpus scoring.
from .intelligibility import stoi  # noqa: F401
from .evaluate import (  # noqa: F401
    METRICS, EvalTable, MetricRow, evaluate_corpus, read_table, render_summary,
    si_snr_improvement, summary_table, systems_tsv, write_table,
)
