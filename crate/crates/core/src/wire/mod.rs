//! Southbound messages, network events, and their binary encodings.
//!
//! Every other module speaks in these types. Encodings are fixed-layout and
//! big-endian so that a consumer in any language can implement them from the
//! layout alone; see [`codec`] for the framing.

pub mod codec;
mod error;
mod types;

pub use codec::{decode_event, decode_sb, encode_event, encode_sb};
pub use error::{DecodeError, EncodeError};
pub use types::*;
