//! Simulation and least-absolute-deviation drift estimation for SDEs driven
//! by locally α-stable Lévy noise, sampled at high frequency.
//!
//! ```
//! use stablelad::{estimate_path, simulate_path, DriftFamily, LevyConfig, ModelSpec, PowerVariationConfig,
//!     RegressorKind, SamplingDesign, ScaleFn, ScaleMode, ThetaDomain, WeightFn};
//!
//! let model = ModelSpec {
//!     drift: DriftFamily::Linear,
//!     theta0: vec![0.5, -1.0],
//!     sigma: ScaleFn::Constant(1.0),
//!     weight: WeightFn::one(),
//!     domain: ThetaDomain::new(vec![-10.0, -10.0], vec![10.0, 10.0]).unwrap(),
//!     levy: LevyConfig::stable(1.5),
//!     dissipation_kappa: 1.0,
//! };
//! let design = SamplingDesign::fixed_t(4096, 1.0);
//! let path = simulate_path(&model, &design, 1, 42).unwrap();
//! let report = estimate_path(&path, &model.lite(), RegressorKind::Euler,
//!     &PowerVariationConfig::default(), ScaleMode::SpotScale).unwrap();
//! assert!((report.index.alpha_hat - 1.5).abs() < 0.3);
//! ```

// `!(x > 0.0)` is used on purpose so that NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod config;
pub mod error;
pub mod estimate;
pub mod experiments;
pub mod index_scale;
pub mod lad;
pub mod numeric;
pub mod quadrature;
pub mod regressors;
pub mod rng;
pub mod sde_sim;
pub mod special;
pub mod stable_noise;

pub use config::RunConfig;
pub use error::{Error, Result};
pub use estimate::{estimate_path, rate, EstimationReport};
pub use experiments::{run_campaign, CampaignConfig, CampaignSummary, ReplicationRecord, Studentizer};
pub use index_scale::{estimate_alpha, IndexEstimate, PowerVariationConfig, ScaleMode};
pub use lad::{lad_objective, solve_lad, LadProblem, LadSolution};
pub use regressors::{regressor, RegressorKind};
pub use sde_sim::{
    ingest_path, simulate_path, DriftFamily, Horizon, HorizonKind, ModelLite, ModelSpec, ObservationPath,
    SamplingDesign, ScaleFn, ThetaDomain, WeightFn,
};
pub use stable_noise::{sample_noise_increments, sample_standard_stable, LevyConfig, NuisanceSpec};

// The guide's code blocks run as doctests.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/simulation.md")]
    mod simulation {}
    #[doc = include_str!("../../../book/src/estimation.md")]
    mod estimation {}
    #[doc = include_str!("../../../book/src/index_scale.md")]
    mod index_scale {}
    #[doc = include_str!("../../../book/src/experiments.md")]
    mod experiments {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
