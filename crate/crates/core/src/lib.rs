//! Quickest detection of changes between sub-diffraction objects.
//!
//! The crate models a pair of incoherent objects blurred by a coherent
//! point-spread function, computes how much information per photon the
//! change carries (quantum relative entropy and the classical relative
//! entropies of two receivers), simulates photon-count streams, and runs
//! a CUSUM detector on them.
//!
//! Module map:
//!
//! - [`scene`]: normalized object models and their second moments.
//! - [`optics`]: Gaussian and Airy PSFs, autocorrelations, and the
//!   three-mode (TriSPADE) photon probabilities.
//! - [`channels`]: Poisson channel models for direct imaging and TriSPADE,
//!   plus the relative-entropy calculators.
//! - [`qre`]: numerical quantum relative entropy in a truncated
//!   Hermite-Gauss basis.
//! - [`detect`]: log-likelihood ratios and the CUSUM recursion.
//! - [`sim`]: seeded Monte Carlo trials, ensembles and theory predictors.
//!
//! All lengths are nondimensional: object coordinates are in units of the
//! largest object extent, image-plane coordinates in units of the PSF width.

pub mod bessel;
pub mod channels;
pub mod detect;
pub mod optics;
pub mod qre;
pub mod quadrature;
pub mod scene;
pub mod sim;

pub use channels::{ChannelModel, PixelGrid, Receiver, Scenario};
pub use detect::CusumState;
pub use optics::{Psf, PsfKind};
pub use scene::{Moments, ObjectModel, ObjectSpec, Vec2};
pub use sim::{EnsembleStats, TrialEngine, TrialRecord};
