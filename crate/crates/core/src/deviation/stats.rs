use serde::Serialize;

/// Scale turning a median absolute deviation into a normal-consistent sigma.
pub const MAD_SCALE: f64 = 1.4826;

/// Summary of the finite deviations of a context.
///
/// Values are sorted before summation, so the result does not depend on the
/// order in which cells were enumerated.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct DeviationStats {
    pub count: usize,
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
    pub median: f64,
    pub mad: f64,
}

/// Pairwise (cascade) summation.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 8 {
        return xs.iter().sum();
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

fn median_sorted(xs: &[f64]) -> f64 {
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

impl DeviationStats {
    pub fn compute(values: &[f64]) -> Self {
        if values.is_empty() {
            return Self::default();
        }
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let n = sorted.len() as f64;
        let mean = pairwise_sum(&sorted) / n;
        let mut sq: Vec<f64> = sorted.iter().map(|v| (v - mean) * (v - mean)).collect();
        sq.sort_by(f64::total_cmp);
        let std = (pairwise_sum(&sq) / n).sqrt();
        let median = median_sorted(&sorted);
        let mut abs_dev: Vec<f64> = sorted.iter().map(|v| (v - median).abs()).collect();
        abs_dev.sort_by(f64::total_cmp);
        Self {
            count: sorted.len(),
            mean,
            std,
            median,
            mad: median_sorted(&abs_dev),
        }
    }
}
