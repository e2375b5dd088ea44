//! User-supplied distance functions over opaque byte objects.
//!
//! A metric compares two objects from the voters' output space and returns a
//! nonnegative real expressing their closeness. The partition-based voting
//! algorithms treat two objects within ε of each other as equal. Built-in
//! metrics guarantee d(x, x) = 0 for byte-identical x; user-supplied ones
//! must do the same.

use std::sync::Arc;

/// A distance function over two opaque byte objects.
pub type Metric = Arc<dyn Fn(&[u8], &[u8]) -> f64 + Send + Sync>;

/// Wraps a closure as a [`Metric`].
pub fn from_fn(f: impl Fn(&[u8], &[u8]) -> f64 + Send + Sync + 'static) -> Metric {
    Arc::new(f)
}

/// Absolute difference of two 8-byte little-endian doubles. Objects that are
/// not 8 bytes long are treated as maximally distant.
pub fn absolute_difference() -> Metric {
    Arc::new(|a, b| match (decode(a), decode(b)) {
        (Some(x), Some(y)) => (x - y).abs(),
        _ => f64::INFINITY,
    })
}

/// 0 for byte-identical objects, 1 otherwise. Useful for exact-style voting
/// over arbitrary byte strings.
pub fn byte_equality() -> Metric {
    Arc::new(|a, b| if a == b { 0.0 } else { 1.0 })
}

fn decode(bytes: &[u8]) -> Option<f64> {
    let arr: [u8; 8] = bytes.try_into().ok()?;
    Some(f64::from_le_bytes(arr))
}
