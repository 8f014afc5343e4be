//! Central `(epsilon, delta)` accounting for shuffled reports under
//! personalized local randomizers.
//!
//! Each of `n` users randomizes their datum with their own local budget
//! `(epsilon_i, delta_i)` — Laplace, Gaussian, or randomized response — and
//! a trusted shuffler permutes the reports. This crate computes a tight
//! central privacy guarantee for the shuffled output:
//!
//! 1. [`mechanisms`] calibrates each randomizer exactly;
//! 2. [`clone_probability`] computes, per user, the probability that their
//!    report is indistinguishable from the worst-case user's two candidate
//!    values (a likelihood-ratio test over density dominance regions);
//! 3. [`clone_count`] convolves those probabilities into the exact
//!    Poisson-binomial clone-count distribution;
//! 4. [`accountant`] evaluates the amplified trade-off curve and converts
//!    it to `delta_s(epsilon)` / inverts it to `epsilon_s(delta)`;
//! 5. [`oracle`] provides brute-force ground truth for small populations;
//! 6. [`pipeline`] ties everything together for the `shuffle-amp` CLI with
//!    seeded, bit-reproducible sampling and CSV/JSON emission.
//!
//! ```
//! use shuffle_amp::accountant::{delta_s, AmplificationInput};
//! use shuffle_amp::clone_count::poisson_binomial;
//! use shuffle_amp::clone_probability::{p_neighbor, worst_case_test};
//! use shuffle_amp::mechanisms::{calibrate, MechanismSpec};
//!
//! // Worst-case user at eps = 2, four others at eps = 0.8, all Laplace.
//! let mech1 = calibrate(MechanismSpec::pure_laplace(2.0)?)?;
//! let mech_i = calibrate(MechanismSpec::pure_laplace(0.8)?)?;
//! let w = p_neighbor(&mech1)?;
//! let t = worst_case_test(&mech_i, &mech1)?;
//! let q = vec![t.p0 * t.p1_side; 4];
//! let input = AmplificationInput::new(5, w, 0.0, poisson_binomial(&q)?)?;
//! let bound = delta_s(&input, 0.25)?;
//! assert!(bound.delta < 1.0);
//! # Ok::<(), shuffle_amp::error::Error>(())
//! ```

pub mod accountant;
pub mod clone_count;
pub mod clone_probability;
pub mod error;
pub mod mechanisms;
pub mod oracle;
pub mod pipeline;

/// The guide chapters under `book/` double as documentation modules so
/// that every code snippet in the book is compiled and run as a doc-test.
#[cfg(doctest)]
mod book {
    #![doc = include_str!("../../../book/src/introduction.md")]

    #[doc = include_str!("../../../book/src/mechanisms.md")]
    mod mechanisms {}
    #[doc = include_str!("../../../book/src/clone-probability.md")]
    mod clone_probability {}
    #[doc = include_str!("../../../book/src/clone-count.md")]
    mod clone_count {}
    #[doc = include_str!("../../../book/src/accountant.md")]
    mod accountant {}
    #[doc = include_str!("../../../book/src/oracle.md")]
    mod oracle {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
