//! Gromov-Wasserstein discrepancies and an SGW-regularized adversarial
//! trainer.
//!
//! | Module | Contents |
//! |--------|----------|
//! | [`geometry`] | point sets, distance matrices, couplings |
//! | [`gw_exact`] | full GW objective, permutation brute force, entropic solver |
//! | [`gw_sliced`] | projections, closed-form 1D GW, sliced estimator |
//! | [`nn`] | dense networks with reverse-mode gradients, Adam, gradient penalty |
//! | [`losses`] | critic, reconstruction, sliced-GW and adversarial losses |
//! | [`trainer`] | synthetic datasets, alternating training loop, evaluation |
//! | [`metrics`] | PSNR and SSIM |
//! | [`cli`] | command implementations behind the `sgwgan` binary |

pub mod cli;
pub mod error;
pub mod geometry;
pub mod gw_exact;
pub mod gw_sliced;
pub mod io;
pub mod losses;
pub mod metrics;
pub mod nn;
pub mod rng;
pub mod trainer;

pub use error::{Error, Result};
pub use geometry::{pairwise_distances, split_by_label, Coupling, DistanceMatrix, EmbeddingSet};
pub use rng::SeededRng;
