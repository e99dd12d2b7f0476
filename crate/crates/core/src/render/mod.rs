pub mod svg;
pub mod table;

/// Largest number of curve points shipped to a client or drawn in a plot.
pub const MAX_CURVE_POINTS: usize = 5_000;

/// Indices of an evenly strided subset of `0..n` with at most `max` entries,
/// always keeping the first and last index.
pub fn downsample_indices(n: usize, max: usize) -> Vec<usize> {
    if n <= max {
        return (0..n).collect();
    }
    if max < 2 {
        return (0..max).collect();
    }
    (0..max).map(|k| k * (n - 1) / (max - 1)).collect()
}
