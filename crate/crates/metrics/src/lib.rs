//! Scalar-generic metrics for evolving-agent simulations.
//!
//! Everything here is written against [`Scalar`] so the same code runs in
//! `f32` or `f64`. The `*64` aliases at the bottom of this file are the
//! concrete types the rest of the workspace uses.

pub mod activity;
pub mod effect;
pub mod error;
pub mod kruskal;
pub mod ranks;
pub mod scalar;
pub mod special;
pub mod trueskill;
pub mod wilcoxon;

pub use activity::{activity_level, delta_overall, distance_matrix, euclid_distance, DistanceMatrix, GoalCountVector, ScoreSeries};
pub use effect::cohens_d;
pub use error::MetricsError;
pub use kruskal::{dunn_posthoc_holm, holm_adjust, kruskal_wallis, PairwiseResult};
pub use scalar::Scalar;
pub use trueskill::{rate_free_for_all, trueskill_rank, Rating, RatingResult, TrueSkillConfig};
pub use wilcoxon::wilcoxon_signed_rank;

use serde::{Deserialize, Serialize};

/// Which procedure produced a [`StatTestResult`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestMethod {
    WilcoxonExact,
    WilcoxonNormal,
    KruskalWallis,
    Dunn,
    CohensD,
}

/// Outcome of a hypothesis test or effect-size computation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StatTestResult<T> {
    pub statistic: T,
    pub p_value: Option<T>,
    pub p_adjusted: Option<T>,
    pub method: TestMethod,
}

pub type ScoreSeries64 = ScoreSeries<f64>;
pub type GoalCountVector64 = GoalCountVector<f64>;
pub type DistanceMatrix64 = DistanceMatrix<f64>;
pub type StatTestResult64 = StatTestResult<f64>;
pub type PairwiseResult64 = PairwiseResult<f64>;
pub type Rating64 = Rating<f64>;
pub type RatingResult64 = RatingResult<f64>;
pub type TrueSkillConfig64 = TrueSkillConfig<f64>;

pub type ScoreSeries32 = ScoreSeries<f32>;
pub type GoalCountVector32 = GoalCountVector<f32>;
pub type DistanceMatrix32 = DistanceMatrix<f32>;
