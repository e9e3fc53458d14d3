//! Config hashing so checkpoints can be matched against the architecture
//! they were trained with.

use sha2::{Digest, Sha256};

/// SHA-256 over the canonical JSON serialization of any config value.
/// Field order is struct order, so equal configs hash equally.
pub fn config_hash<T: serde::Serialize>(value: &T) -> [u8; 32] {
    let json = serde_json::to_string(value).expect("config serialization cannot fail");
    let mut hasher = Sha256::new();
    hasher.update(json.as_bytes());
    hasher.finalize().into()
}

pub fn hash_hex(hash: &[u8; 32]) -> String {
    hash.iter().map(|b| format!("{b:02x}")).collect()
}
