//! Cyclic state-machine frontend: parsing, cycle-boundary normalization,
//! a reference interpreter, and translation to the kernel with per-machine
//! timers and pin-encoded operation calls.

pub mod interp;
pub mod model;
pub mod normalize;
pub mod pinmap;
pub mod translate;

use thiserror::Error;

pub use interp::{MachineSim, NormSim, OpCall};
pub use model::{
    parse_machines, Action, ArgDecl, ConstDecl, ConstExpr, GuardAtom, OpDecl, StateDecl,
    StateMachine, Transition,
};
pub use normalize::{normalize, NormState, NormTransition, NormalizedMachine};
pub use pinmap::{bits_for, check_pinmap, default_pinmap, parse_pinmap, ArgPins, OpPins, PinMap};
pub use translate::translate_sm;

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum SmError {
    #[error("parse error line {line}: {message}")]
    Parse { line: u32, message: String },
    #[error(
        "E_TIMELESS_LOOP machine '{machine}': cycle of timeless transitions through '{state}'"
    )]
    TimelessLoop { machine: String, state: String },
    #[error("E_CONST_RANGE '{name}' = {value} outside {lo}..{hi}")]
    ConstRange {
        name: String,
        value: i64,
        lo: i64,
        hi: i64,
    },
    #[error("E_CONST_RANGE constant '{name}' has no value")]
    ConstMissing { name: String },
    #[error("constant evaluation failed: {message}")]
    ConstEval { message: String },
    #[error("E_PIN_OVERFLOW {message}")]
    PinOverflow { message: String },
    #[error("E_DUP_OP_CALL operation '{op}' invoked twice in one model cycle")]
    DupOpCall { op: String },
    #[error(
        "machine '{machine}': the initial chain must be a single unguarded path to a wait state"
    )]
    InitBranch { machine: String },
    #[error("machine '{machine}': {detail}")]
    AmbiguousCycleEnd { machine: String, detail: String },
    #[error("machine '{machine}' has too many cycle states")]
    TooManyStates { machine: String },
}

/// Binary expansion of a 3-bit operation argument, returned as
/// (b2, b1, b0), most significant bit first.
pub fn encode_arg(value: u32) -> Result<(bool, bool, bool), SmError> {
    if value > 7 {
        return Err(SmError::ConstRange {
            name: "argument".into(),
            value: value as i64,
            lo: 0,
            hi: 7,
        });
    }
    Ok((value & 0b100 != 0, value & 0b010 != 0, value & 0b001 != 0))
}
