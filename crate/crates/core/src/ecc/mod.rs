//! Elliptic-curve arithmetic and the matrix cipher built on it.

mod curve;
mod field;
mod mea;

pub use curve::{CurveParams, CurvePoint};
pub use field::U256;
pub use mea::{
    check_headroom, derive_shared, keygen, keygen_from_seed, mea_decrypt, mea_encrypt,
    mea_encrypt_with, sample_ephemeral, CipherMatrix, KeyPair,
};
