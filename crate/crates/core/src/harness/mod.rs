//! Experiment orchestration: configuration, invariance testing and artifacts.

mod config;
mod invariance;
mod run;

pub use config::{
    ExperimentConfig, ExperimentKind, FlowSection, GaugeSection, InitialDatum, InvarianceSection, ModelSection,
    MomentsSection, SampleSection, TruncationSection, VariationalSection,
};
pub use invariance::{
    invariance_test, invariant_weight, observable_suite, InvarianceReport, ObservableComparison, ObservableSuite,
    RELATIVE_SE_FLOOR,
};
pub use run::{random_sequence, run, RunOutcome};
