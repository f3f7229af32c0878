//! End-to-end sweeps, run manifests, plots and run comparison.
//!
//! A sweep prepares one [`Pipeline`] (corpus, identifiers, query split and
//! training pairs), evaluates every sweep point on it, fits a power law to
//! each fitted series and persists the lot under the output directory.

mod compare;
mod config;
mod pipeline;
mod plot;
mod sweep;

pub use compare::compare_report;
pub use config::{Method, SweepConfig, SweepKind};
pub use pipeline::{training_pairs, Pipeline};
pub use plot::{emit_plot, render_svg, PlotOptions};
pub use sweep::{
    fit_series, mean_metrics, points_csv, run_sweep, series_slug, PointRecord, RunManifest,
    RunStatus, SeriesFit, ARTIFACT_VERSION,
};
