//! Coupled phase-oscillator model of bulk-synchronous parallel programs.
//!
//! Each MPI process is an oscillator whose phase advances by 2π per
//! compute-communicate iteration. Processes interact through a topology
//! matrix and an interaction potential; the potential's shape decides
//! whether a disturbed program snaps back into lockstep (resource-scalable
//! codes) or settles into a staggered, desynchronized pattern
//! (bandwidth-bound codes).
//!
//! The crate provides the model ([`model`], [`potential`], [`topology`],
//! [`noise`]), an adaptive Dormand-Prince integrator ([`integrator`]),
//! observables ([`metrics`]), a discrete-event oracle of compute-communicate
//! processes ([`des`]), and scenario files with their outputs
//! ([`scenario`], [`output`]).

// `!(x > 0.0)` is used on purpose to reject NaN along with non-positives.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod des;
pub mod error;
pub mod integrator;
pub mod metrics;
pub mod model;
pub mod noise;
pub mod output;
pub mod potential;
pub mod scenario;
pub mod topology;

pub use error::{Error, Result};
pub use integrator::{integrate, reference_integrate, IntegratorConfig, Trajectory};
pub use model::{coupling_strength, rhs, KappaMode, ModelSpec, PhaseState};
pub use noise::{apply_event, DelayEvent, DelaySpec, Disturbance, EventList, NoiseSpec};
pub use potential::{eval_potential, PotentialKind};
pub use topology::{Boundary, DistanceSet, Topology};
