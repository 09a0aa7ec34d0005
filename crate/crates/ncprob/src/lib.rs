//! Non-classicality tests for joint photon-number distributions of two-arm fields.
//!
//! Start from a [`pmf::JointPmf`], pick criteria from [`criteria`], then measure how
//! deep the violation goes with [`quantify::ncd`] (ordering depth) or
//! [`quantify::nccp`] (counting parameter). [`scan`] runs whole families of
//! criteria over index ranges and [`fields`] builds the usual synthetic beams.
//!
//! ```
//! use ncprob::criteria::{eval_probability, CriterionSpec};
//! use ncprob::fields::ideal_twin;
//!
//! let twin = ideal_twin(2.0, 5.0, None).unwrap();
//! let e001 = CriterionSpec::appendix("E001").unwrap();
//! assert!(eval_probability(&e001, &twin).unwrap().value < 0.0);
//! ```

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod check;
pub mod cli;
pub mod criteria;
pub mod fields;
pub mod kernel;
pub mod pmf;
pub mod poly;
pub mod quantify;
pub mod scan;
pub mod special;
