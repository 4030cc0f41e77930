//! Local explanations for conditional sequence generators.
//!
//! Given a black-box [`models::Generator`] that scores a response one step
//! at a time, the estimators in [`explain`] attribute each response step
//! to the context segments that drove it. [`eval`] measures how necessary
//! and sufficient the top-ranked segments are.
//!
//! ```
//! use lerg_core::explain::lerg_s;
//! use lerg_core::models::{AdditiveToy, AdditiveToySpec};
//! use lerg_core::perturb::PerturbPlan;
//! use lerg_core::text::Example;
//!
//! let toy = AdditiveToy::new(AdditiveToySpec {
//!     context: vec!["rain".into(), "today".into()],
//!     base: vec![-0.4],
//!     weights: vec![vec![-1.0], vec![-2.0]],
//! })
//! .unwrap();
//! let ex = Example::parse("demo", "rain today", "umbrella").unwrap();
//! let phi = lerg_s(&toy, &ex, &PerturbPlan::with_seed(7)).unwrap();
//! assert!((phi.get(0, 0) + 1.0).abs() < 1e-12);
//! ```

pub mod attribution;
pub mod checks;
pub mod error;
pub mod eval;
pub mod explain;
pub mod mask;
pub mod models;
pub mod perturb;
pub mod rng;
pub mod synth;
pub mod text;

pub use attribution::{ExplanationMatrix, Matrix, Method, Reduction, Saliency, StepLogProbs};
pub use error::{LergError, Result};
pub use mask::{Mask, PerturbMode};
pub use text::{Example, SegmentedText};
