//! Isometric deformations of semidiscrete (piecewise-ruled) surfaces.
//!
//! A surface is a stack of `n + 1` curves sampled on one uniform grid; the
//! strips between consecutive curves are ruled. The crate computes
//! infinitesimal and finite flexions of such surfaces, evaluates the
//! flexibility functionals of 3-ribbon windows, handles the developable case
//! and reads/writes surfaces, reports and mesh frames.

// Index loops over several node-aligned arrays read better than zipped iterators.
#![allow(clippy::needless_range_loop)]

pub mod developable;
pub mod error;
pub mod flexibility;
pub mod flexion;
pub mod generate;
pub mod geometry;
pub mod io;
pub mod numeric;
pub mod system_a;

pub type Vec3 = nalgebra::Vector3<f64>;

pub use error::{FlexError, Result};
pub use flexibility::{
    chi, continuous_shift, discrete_shift, h_fn, lambda_fn, monodromy_check, normalize_w, nribbon_infinitesimal_report,
    FlexReport, NRibbonReport, Verdict,
};
pub use flexion::{
    flex_2ribbon, flex_2ribbon_oriented, invariant_drift, junction_alpha, propagate_flexion, DriftSummary, FlexOptions,
    FlexionTrajectory,
};
pub use geometry::{
    derivative, frame_at, genericity_location, genericity_margin, inner_geometry, triple, Grid, InvariantClass,
    InvariantField, LocalFrame, PairFields, SampledCurve, SampledSurface,
};
pub use io::{export_frames, parse_obj, Metadata, ReportDocument, SurfaceDocument, Tolerances, TrajectoryDocument};
pub use system_a::{
    canonical_flexion, canonical_initial, initial_g_from_vectors, reconstruct_variation, solve_system_a, system_a_rhs,
    variational_field, verify_infinitesimal_flexion, GField, GState, HField, TangentField, VariationField,
    VerificationReport,
};
