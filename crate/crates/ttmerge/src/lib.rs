//! Test-time adaptive merging of two classifier checkpoints.
//!
//! Given a broadly trained *pretrained* model and an *expert* fine-tuned
//! from it, `ttmerge` blends their weights per input (or per batch) with a
//! coefficient driven by how much the two models' predictions disagree,
//! measured by the Jensen–Shannon divergence. Around that core sit:
//!
//! * [`params`]: parameter maps, the `TTMC` checkpoint format and the static
//!   merges (soup, task arithmetic, slerp, TIES, mixup);
//! * [`prob`]: softmax, entropy, KL and JS divergences, ratio heuristics;
//! * [`coefficient`]: the coefficient rules and their configuration;
//! * [`models`]: linear and MLP classifiers trained from scratch;
//! * [`dynamic`]: sample-wise and batch-wise merged inference, the
//!   coefficient cache and forward-pass accounting;
//! * [`bench`]: a synthetic distribution-shift benchmark with accuracy,
//!   corruption-error and diagnostic reports.
//!
//! ```
//! use ttmerge::coefficient::{coefficient_for, CoefficientConfig};
//! use ttmerge::prob::ProbVector;
//!
//! let p_pt = ProbVector::new(vec![0.7, 0.2, 0.1])?;
//! let p_ft = ProbVector::new(vec![0.1, 0.8, 0.1])?;
//! let rec = coefficient_for(0, &p_pt, &p_ft, &CoefficientConfig::default())?;
//! assert!(rec.lambda_prime > 0.5);
//! # Ok::<(), ttmerge::Error>(())
//! ```

pub mod bench;
pub mod coefficient;
mod container;
pub mod dynamic;
mod error;
pub mod models;
pub mod params;
pub mod prob;
pub mod rng;

pub use container::write_atomic;
pub use error::{Error, ErrorClass, Result};

// The guide's code blocks run as doctests.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/checkpoints.md")]
    mod checkpoints {}
    #[doc = include_str!("../../../book/src/static-merges.md")]
    mod static_merges {}
    #[doc = include_str!("../../../book/src/divergences.md")]
    mod divergences {}
    #[doc = include_str!("../../../book/src/coefficients.md")]
    mod coefficients {}
    #[doc = include_str!("../../../book/src/dynamic-merging.md")]
    mod dynamic_merging {}
    #[doc = include_str!("../../../book/src/benchmark.md")]
    mod benchmark {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
