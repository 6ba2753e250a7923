//! Reference codecs: static bins, per-step Huffman coding, distortion-gated
//! Huffman coding and truncated arithmetic coding.

mod arithmetic;
mod bins;
mod huffman;

pub use arithmetic::{Arithmetic, DEFAULT_PRECISION};
pub use bins::Bins;
pub use huffman::{Huffman, HuffmanTree, PatientHuffman};
