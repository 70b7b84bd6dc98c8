use sha2::{Digest, Sha256};

/// Lowercase hex SHA-256 of `data`.
pub fn sha256_hex(data: impl AsRef<[u8]>) -> String {
    hex::encode(Sha256::digest(data.as_ref()))
}

/// First eight bytes of the SHA-256 of `data`, big-endian.
pub fn sha256_u64(data: impl AsRef<[u8]>) -> u64 {
    let d = Sha256::digest(data.as_ref());
    let mut buf = [0u8; 8];
    buf.copy_from_slice(&d[..8]);
    u64::from_be_bytes(buf)
}
