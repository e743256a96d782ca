use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EncodeError {
    #[error("frame payload of {0} bytes exceeds 1500")]
    PayloadTooLarge(usize),
    #[error("ethertype {0:#06x} is not one of discovery/arp/data")]
    UnknownEthertype(u16),
    #[error("port {0:#06x} is reserved for a pseudo-port")]
    ReservedPort(u16),
    #[error("{0} entries do not fit the wire count field")]
    TooMany(&'static str),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DecodeError {
    #[error("input truncated")]
    Truncated,
    #[error("bad magic {0:#010x}")]
    BadMagic(u32),
    #[error("unknown version {0}")]
    UnknownVersion(u8),
    #[error("unknown tag {0}")]
    UnknownTag(u8),
    #[error("length mismatch: header declares {declared} payload bytes, found {actual}")]
    LengthMismatch { declared: usize, actual: usize },
    #[error("invalid field: {0}")]
    InvalidField(&'static str),
}
