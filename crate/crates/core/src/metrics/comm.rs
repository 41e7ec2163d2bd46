use crate::sparse::Mask;

/// Transmitted parameter values are costed as 32-bit floats.
pub const BYTES_PER_VALUE: u64 = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Up,
    Down,
}

/// Bytes needed to ship the active values of each mask once.
///
/// Only parameter values are counted; index/bitmap overhead is reported
/// separately by [`mask_overhead_bytes`].
pub fn comm_bytes<'a>(masks: impl IntoIterator<Item = &'a Mask>) -> u64 {
    masks
        .into_iter()
        .map(|m| m.total_active() as u64 * BYTES_PER_VALUE)
        .sum()
}

/// Bytes for `participants` clients each shipping `round(density · params)`
/// values in every listed direction.
pub fn comm_bytes_for_density(
    params: usize,
    density: f64,
    participants: usize,
    directions: &[Direction],
) -> u64 {
    let values = (density * params as f64).round() as u64;
    values * BYTES_PER_VALUE * participants as u64 * directions.len() as u64
}

/// Size of one packed bitmap over `params` positions.
pub fn mask_overhead_bytes(params: usize) -> u64 {
    params.div_ceil(8) as u64
}
