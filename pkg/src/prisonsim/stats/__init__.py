from prisonsim.stats.design import (
    CollinearityWarning,
    Design,
    DesignSpec,
    Factor,
    encode_design,
    logit_spec,
    ols_spec,
)
from prisonsim.stats.logit import LogitFit, logit_fit
from prisonsim.stats.ols import OlsFit, aliased_columns, ols_fit
from prisonsim.stats.timeseries import (
    AdfResult,
    Direction,
    GrangerResult,
    PValueSummary,
    adf_test,
    critical_value_5pct,
    granger_lag1,
    pvalue_summary,
)

__all__ = [
    "AdfResult",
    "CollinearityWarning",
    "Design",
    "DesignSpec",
    "Direction",
    "Factor",
    "GrangerResult",
    "LogitFit",
    "OlsFit",
    "PValueSummary",
    "adf_test",
    "aliased_columns",
    "critical_value_5pct",
    "encode_design",
    "granger_lag1",
    "logit_fit",
    "logit_spec",
    "ols_fit",
    "ols_spec",
    "pvalue_summary",
]
