//! Generative linguistic steganography over autoregressive token
//! distributions.
//!
//! The core codec is adaptive dynamic grouping ([`adg`]): at each step the
//! quantized next-token distribution is split into `2^r` groups of nearly
//! equal mass, `r` message bits pick a group, and the selected group is
//! regrouped until its largest token holds more than half its mass. A token
//! is then sampled from the final group. Extraction replays the grouping
//! and reads back the group indices.
//!
//! Four reference codecs live in [`baselines`], corpus preparation in
//! [`corpus`], distributions and the n-gram model in [`lm`], message framing
//! in [`bitio`], the shared generation loop in [`stego`] and evaluation
//! metrics in [`metrics`].
//!
//! Note that none of the codecs encrypt: the message should already look
//! like uniform random bits (encrypt it first) for the security argument to
//! hold.

pub mod adg;
pub mod baselines;
pub mod bitio;
pub mod corpus;
pub mod lm;
pub mod metrics;
pub mod stego;

pub type TokenId = u32;

pub use lm::{ConditionalDistribution, LmProvider};
