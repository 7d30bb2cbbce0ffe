//! Stable content digests used to stamp provenance into output files.

use sha2::{Digest, Sha256};

/// Hex-encoded, truncated SHA-256 of `bytes`.
///
/// Sixteen hex characters are enough to detect mismatched inputs while
/// staying readable inside text headers.
pub fn digest_bytes(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    let out = hasher.finalize();
    out.iter().take(8).map(|b| format!("{b:02x}")).collect()
}
