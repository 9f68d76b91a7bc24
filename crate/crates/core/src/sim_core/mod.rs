//! Deterministic discrete-event engine and shared radio medium.

mod event;
mod medium;
mod time;

pub use event::EventQueue;
pub use medium::{LinkModel, Medium, PdrCurve, Transmission, TxId};
pub use time::{Micros, SimTime};
