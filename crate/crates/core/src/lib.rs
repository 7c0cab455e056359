//! Diversity and shared-identity metrics for groups described by categorical traits.
//!
//! Groups are summarized by intersecting diversity D (how likely two members
//! differ in at least one trait) and shared identity S (the expected share of
//! traits two members have in common). The crate computes both, checks the
//! bounds that tie them together, constructs the exact attainable (D, S)
//! region for two traits, sweeps it numerically for any schema, and runs
//! randomization tests on collections of groups.

pub mod attainable;
pub mod bounds;
pub mod error;
pub mod io;
pub mod metrics;
pub mod schema;
pub mod stats;
pub mod sweep;

pub use attainable::{
    attainable_region, compute_q5, membership, witness, AttainableRegion, BoundaryWitness, Membership, Point2,
    Q5Solution, RegionExport, Segment,
};
pub use bounds::{
    gradient_pair, region_for_schema, verify_roster_bounds, BoundKind, BoundsReport, GradientPair, RegionSpec,
};
pub use error::{Error, Result};
pub use io::{DatasetManifest, LoadOptions, LoadReport, MarginalProfile};
pub use metrics::{
    aggregate, metric_d, metric_s, metric_s_n, metrics_for_roster, s_from_s_n, s_n_from_s, shared_count_distribution,
    IdentityDistribution, MetricPoint, PairSampling, SharedCountDistribution,
};
pub use schema::{Individual, Roster, Trait, TraitSchema};
pub use stats::{
    composition_test, dominance_test, era_comparison, pca2, sample_ensembles, CompositionReport, DominanceReport,
    EnsembleConfig, EraPoint, PcaSummary, PerformancePoint, TestReport,
};
pub use sweep::{sweep, SweepPoint, SweepResult};
