//! Artificial-noise-aided secure beamforming for a MISO-NOMA cognitive radio
//! network with SWIPT under a sigmoid energy-harvesting model.

pub mod baselines;
pub mod conic;
pub mod experiments;
pub mod formulation;
pub mod linalg;
pub mod penalty;
pub mod physics;
pub mod robust;
pub mod sca;
pub mod scenario;
