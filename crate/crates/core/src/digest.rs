//! Stable 64-bit FNV-1a digests for tool parameters.

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    bytes.iter().fold(FNV_OFFSET, |h, &b| (h ^ u64::from(b)).wrapping_mul(FNV_PRIME))
}

/// Canonical text for tool parameters: JSON input is re-rendered with sorted
/// keys and no insignificant whitespace; anything else is trimmed.
pub fn canonical_params(params: &str) -> String {
    match serde_json::from_str::<serde_json::Value>(params) {
        Ok(v) => serde_json::to_string(&v).expect("json value serializes"),
        Err(_) => params.trim().to_owned(),
    }
}

/// `params_digest` value for a tool invocation: 16 lowercase hex digits.
pub fn params_digest(params: &str) -> String {
    format!("{:016x}", fnv1a64(canonical_params(params).as_bytes()))
}
