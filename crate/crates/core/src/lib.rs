//! Decentralized gain-phase small-signal stability analysis for
//! converter-dominated power networks.
//!
//! The matrix-phase and network layers are generic over the scalar
//! ([`matphase::Real`]); device models, sweeps and the oracle run in `f64`.

pub mod criteria;
pub mod devmodel;
pub mod matphase;
pub mod network;
pub mod oracle;
pub mod scenario;

pub use num_complex::Complex64;

pub type MatrixSample = matphase::MatrixSample<f64>;
pub type GainSpectrum = matphase::GainSpectrum<f64>;
pub type PhaseSpectrum = matphase::PhaseSpectrum<f64>;
pub type NetworkModel = network::NetworkModel<f64>;
pub type Branch = network::Branch<f64>;
pub type Rescaling = network::Rescaling<f64>;
