use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Error {
    #[error("universe bits must be in 1..={max}, got {bits}")]
    Bits { bits: u32, max: u32 },
    #[error("key {key} outside universe of size {universe}")]
    KeyOutOfRange { key: u64, universe: u64 },
}

pub type Result<T> = std::result::Result<T, Error>;

/// Largest supported universe exponent.
pub const MAX_BITS: u32 = 30;

pub(crate) fn check_bits(bits: u32) -> Result<()> {
    if bits == 0 || bits > MAX_BITS {
        return Err(Error::Bits { bits, max: MAX_BITS });
    }
    Ok(())
}

pub(crate) fn check_key(key: u64, bits: u32) -> Result<()> {
    if key >> bits != 0 {
        return Err(Error::KeyOutOfRange {
            key,
            universe: 1u64 << bits,
        });
    }
    Ok(())
}
