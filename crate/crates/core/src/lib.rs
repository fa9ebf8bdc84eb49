//! # orderclust
//!
//! Bayesian clustering of multiple time series that share the same
//! structural-change times.
//!
//! Every series carries a latent *random order*: an ordered partition of the
//! time indices `1..=T` into contiguous blocks whose boundaries are the change
//! points. Orders are drawn from a discrete random measure with symmetric
//! Dirichlet weights over all `2^(T-1)` orders, so ties between series induce a
//! partition of the series. The posterior over that partition is explored with
//! a split-merge Metropolis–Hastings sampler whose new orders come from a
//! data-informed mixture of single-series order posteriors.
//!
//! The crate is organised as:
//!
//! - [`orders`]: random orders, partitions and the Dirichlet-categorical prior.
//! - [`kernel`]: the observation-model abstraction plus the Ornstein–Uhlenbeck
//!   ([`kernel::ou`]) and SIR epidemic ([`kernel::sir`]) kernels.
//! - [`proposal`]: normalization constants and the mixture-of-posteriors proposal.
//! - [`sampler`]: the split-merge chain.
//! - [`estimation`]: Binder loss, point estimates and similarity matrices.
//! - [`simulate`]: synthetic data generators.
//! - [`studies`]: parameter sets of the two synthetic studies.
//! - [`io`]: the NDJSON and CSV formats used by the command line tool.
//!
//! ```
//! use orderclust::orders::{enumerate_orders, RandomOrder};
//!
//! let orders = enumerate_orders(3).unwrap();
//! assert_eq!(orders.len(), 4);
//! assert_eq!(orders[1], RandomOrder::from_bitstring("10").unwrap());
//! ```

// NaN inputs must fail the range checks, hence `!(x > 0.0)` style guards
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod estimation;
pub mod io;
pub mod kernel;
pub mod numeric;
pub mod orders;
pub mod proposal;
pub mod rng;
pub mod sampler;
pub mod simulate;
pub mod studies;

pub use error::{Error, Result};

// The guide in `book/` is compiled here so its snippets run as doctests.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../README.md")]
    mod readme {}
    #[doc = include_str!("../../../book/src/intro.md")]
    mod intro {}
    #[doc = include_str!("../../../book/src/orders.md")]
    mod orders {}
    #[doc = include_str!("../../../book/src/kernels.md")]
    mod kernels {}
    #[doc = include_str!("../../../book/src/proposal.md")]
    mod proposal {}
    #[doc = include_str!("../../../book/src/sampler.md")]
    mod sampler {}
    #[doc = include_str!("../../../book/src/estimation.md")]
    mod estimation {}
    #[doc = include_str!("../../../book/src/simulation.md")]
    mod simulation {}
}
