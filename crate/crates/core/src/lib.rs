//! Polar codes with CRC-aided successive cancellation list decoding,
//! single-position bit flipping, and a recurrent flip ranker.
//!
//! The crate is organised bottom-up:
//!
//! * [`code`] builds codes, encodes, attaches and checks CRCs, and derives
//!   the critical set.
//! * [`channel`] maps codewords to clipped channel LLRs over BPSK/AWGN.
//! * [`decoder`] holds the SC decoder and the traced list decoder.
//! * [`flip`] turns decoder traces into flip plans and runs the flip loop.
//! * [`lstm`] is the inference-only recurrent ranker and its weight format.
//! * [`harness`] drives Monte-Carlo sweeps and dataset generation.
//!
//! Bit positions are 1-based on every public surface.

pub mod channel;
pub mod code;
pub mod decoder;
pub mod flip;
pub mod harness;
pub mod lstm;
mod math;

pub use channel::{ChannelParams, LlrVector, LLR_MAX};
pub use code::{BitVector, CodeError, CrcSpec, PolarCode};
pub use decoder::{DecodeError, DecodeOutcome, FMode, SclDecoder, SclSnapshot, SclTrace};
pub use flip::{FlipContext, FlipError, FlipPlan, SclfResult, Strategy};
pub use harness::{ExperimentConfig, HarnessError, PointResult};
pub use lstm::{BucketDistribution, LstmError, LstmWeights};
