//! Deterministic simulator of the dual-microcontroller board: bootloader,
//! sequencer, runtime safety verification, physical I/O with voting, panic
//! mode, fault injection and scenario replay.

pub mod board;
pub mod fault;
pub mod scenario;
pub mod trace;

pub use board::{
    bootload, BoardConfig, BootError, ChannelPair, MicroState, PanicInfo, PanicReason,
};
pub use fault::{BinSel, FaultKind, FaultSpec, SegSel};
pub use scenario::{parse_scenario, run_scenario, RunOptions, Scenario, ScenarioError, VmError};
pub use trace::{CycleRecord, RunStatus, Trace};
