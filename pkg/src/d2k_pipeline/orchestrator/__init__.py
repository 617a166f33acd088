from .benchmark import SETUP_ORDER, SetupResult, run_benchmark
from .clients import EndpointError, open_store_client, open_sweep_client
from .config import (
    BenchmarkConfig,
    ConfigError,
    K2DConfig,
    NightlyConfig,
    PipelineConfig,
    SiteConfig,
    load_pipeline_config,
    resolve_config_path,
)
from .pipeline import (
    CoverageDirective,
    PipelineError,
    SiteRunResult,
    apply_directive,
    ensure_store_setup,
    k2d_directives,
    run_nightly,
    run_site,
)
from .reports import render_mae_trends, render_runtime_boxplot, render_reports

__all__ = [
    "SETUP_ORDER", "SetupResult", "run_benchmark", "EndpointError",
    "open_store_client", "open_sweep_client", "BenchmarkConfig", "ConfigError",
    "K2DConfig", "NightlyConfig", "PipelineConfig", "SiteConfig",
    "load_pipeline_config", "resolve_config_path", "CoverageDirective",
    "PipelineError", "SiteRunResult", "apply_directive", "ensure_store_setup",
    "k2d_directives", "run_nightly", "run_site", "render_mae_trends",
    "render_runtime_boxplot", "render_reports",
]
