//! Experiment configuration, runs, metrics and report emission.

pub mod config;
pub mod manifest;
pub mod metrics;
pub mod run;
pub mod svg;

pub use config::{AttackKind, ExperimentConfig, Stage};
pub use manifest::{read_manifest, verify_manifest, write_manifest, Manifest, ManifestEntry};
pub use metrics::{metrics, MetricRecord, Observed};
pub use run::{exit_code_for, run, AttackReport, RunOutcome};
pub use svg::{render, Binding, Marker, MarkerRole, PlotKind, SvgPlot};
