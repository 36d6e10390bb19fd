//! Finite-size key rates for binary-modulated continuous-variable QKD with
//! heterodyne detection and a fidelity test.

pub mod bound;
pub mod channel;
pub mod error;
pub mod finitesize;
pub mod heterodyne;
pub mod mathkit;
pub mod neldermead;
pub mod optimize;
pub mod povm;
pub mod quad;
pub mod sim;
pub mod verify;

pub use bound::{DualBound, InequalityReport};
pub use channel::{ChannelExpectations, ChannelParams, JointState};
pub use error::{Error, Result};
pub use finitesize::{KeyRateReport, ProtocolParams, Regime};
pub use mathkit::{WitnessExtrema, WitnessParams};
pub use optimize::{FixedParams, OptimizationConfig, OptimizedPoint, SweepRow};
pub use povm::{FockOperator, FockSpace, PovmMoments, QubitFockOperator, Sector};
pub use sim::{SimOptions, SimTally, SimulatedKey};
pub use verify::{CheckResult, VerifyConfig, VerifyReport};
