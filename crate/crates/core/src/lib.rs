//! Discrete distributions, Bayes-net diagrams, and natural latents.
//!
//! A latent is *natural* over a set of observables when it mediates them
//! (they are nearly independent given it) and is redundantly encoded in each
//! of them (it is nearly a function of any one). This crate computes both
//! errors in bits, checks the stability bound that lets two agents translate
//! between natural latents, and provides the diagram proof rules the bound
//! is derived with.

pub mod dist;
pub mod epsilon;
pub mod error;
pub mod format;
pub mod graph;
pub mod naturality;
pub mod numeric;
pub mod random;
pub mod rules;
pub mod scenarios;
pub mod search;

pub use dist::{kl_divergence, Assignment, JointDistribution, VarSpec};
pub use epsilon::EpsExpr;
pub use error::{Error, Result};
pub use graph::{
    common_topological_order, d_separated, factorization_error, factorization_kl,
    factorization_projection, graph_implies, Dag, FactorizationError,
};
pub use naturality::{
    mediation_error, naturality_report, redundancy_errors, theorem_bound, AgentModel,
    NaturalityReport, TheoremCheck,
};
pub use rules::{Derivation, Diagram, DiagramJudgment, Rule};
pub use search::{
    chunk_observables, evaluate_candidate, exact_natural_latent, DeterministicLatent, Partition,
};
