//! Software-in-the-loop safety harness for hover take-off and landing of a
//! VTOL UAV that localizes its landing pad with fiducial markers.

pub mod control;
pub mod dynamics;
pub mod estimator;
pub mod faults;
pub mod harness;
pub mod mission;
pub mod monitor;
pub mod stpa;
