//! Task-level navigation metrics.

/// Path-efficiency score of one task: zero on failure, otherwise the
/// shortest-path length over the walked length (floored by the shortest
/// path). A zero-length shortest path scores a success as a full point.
pub fn spl(success: bool, shortest_m: f64, path_m: f64) -> f64 {
    if !success {
        return 0.0;
    }
    if shortest_m <= 0.0 {
        return 1.0;
    }
    shortest_m / path_m.max(shortest_m)
}

/// Fraction of sequences whose first `i` tasks all succeeded, for every
/// prefix length `i` in `1..=n`. Sequences shorter than `i` count as failed
/// at that prefix, so the curve never rises with `i`.
pub fn tasks_sr(sequences: &[Vec<bool>]) -> Vec<f64> {
    let n = sequences.iter().map(|s| s.len()).max().unwrap_or(0);
    if sequences.is_empty() {
        return Vec::new();
    }
    (1..=n)
        .map(|i| {
            let hits = sequences
                .iter()
                .filter(|s| s.len() >= i && s[..i].iter().all(|&ok| ok))
                .count();
            hits as f64 / sequences.len() as f64
        })
        .collect()
}

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}
