//! Toolchain and simulator for a dual-channel fail-safe logic controller.
//!
//! The pipeline: a restricted cyclic kernel program is validated, compiled by
//! two independent code generators into two distinct bytecode ISAs, linked
//! into a checksummed dual-binary image, and executed on a simulated
//! dual-microcontroller board whose runtime safety library (store compares,
//! background program sweep, cross-channel handshake, output feedback and
//! vital-code checks) forces a terminal panic on any divergence. Two domain
//! frontends (relay circuits, cyclic state machines) translate into the
//! kernel, and a bounded explicit-state model checker verifies programs
//! against safety properties at desk scale.
//!
//! Start with the runnable examples:
//!
//! ```text
//! cargo run -p vigil --example check_program
//! cargo run -p vigil --example build_image
//! cargo run -p vigil --example simulate
//! cargo run -p vigil --example fault_injection
//! cargo run -p vigil --example relay_to_kernel
//! cargo run -p vigil --example state_machine
//! cargo run -p vigil --example model_check
//! ```
//!
//! or the `vigil` binary: `check`, `build`, `sim`, `translate-relay`,
//! `translate-sm`, `modelcheck`.

pub mod checker;
pub mod cli;
pub mod codegen;
pub mod kernel;
pub mod relay;
pub mod statemachine;
pub mod vm;
