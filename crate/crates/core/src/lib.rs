//! Codesign toolkit for stochastic magnetic-tunnel-junction random number
//! generators.
//!
//! The crate is layered bottom-up:
//!
//! * [`llg`] integrates the stochastic macrospin Landau–Lifshitz–Gilbert
//!   equation for a single free layer.
//! * [`device`] wraps the integrator into SOT and STT coinflip protocols,
//!   measures S-curves and checks whether a parameter set behaves like a
//!   tunable coin.
//! * [`target`] defines truncated target distributions (the gamma family is
//!   the shipped instance) and the particle-tracking experiment the gamma
//!   parameters come from.
//! * [`tree`] turns any source of weighted coins into k-bit samples of a
//!   target CDF, one coinflip per bit.
//! * [`metrics`] scores a configuration by KL divergence and energy per flip.
//! * [`optimizer`] searches normalized parameter space with NSGA-II or a
//!   cross-entropy agent driving a step/observe/reward environment.

pub mod device;
pub mod llg;
pub mod metrics;
pub mod optimizer;
pub mod par;
pub mod rng;
pub mod target;
pub mod tree;

pub use device::{DeviceError, DeviceKind, Protocol, ProtocolSot, ProtocolStt, SCurve};
pub use llg::{DeviceParams, DriveSegment, MagState, SimConfig, SimError, Vec3};
pub use metrics::{ObjectivePair, INVALID_OBJECTIVE};
pub use target::{GammaSpec, TruncatedDistribution};
pub use tree::{CoinSource, IdealCoin};
