//! Mutual-information lower bounds from critic scores on matched and
//! shuffled pairs.

pub mod bounds;
pub mod critic;
pub mod negatives;

pub use bounds::{
    bound_grad, dv_bound, dv_bound_grad, infonce_bound, infonce_bound_grad, BoundKind, DvEma,
    MIEstimate, ScoreBatch, ScoreGrads,
};
pub use critic::{critic_score, Critic, CriticParams};
pub use negatives::shuffle_negatives;
