//! Deviation functions, deviation statistics and sigma-rule outliers.

mod poisson;
mod stats;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cube::{Coord, Dimension};
use crate::estimator::ExpectedField;

pub use poisson::{ln_pmf, log_tails, LogTails};
pub use stats::{pairwise_sum, DeviationStats, MAD_SCALE};

/// Poisson deviation assigned to an observation that has probability zero
/// (positive count against a zero intensity). `-ln` of the smallest
/// positive double is about 744.4.
pub const CAP: f64 = 745.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DeviationError {
    #[error("Poisson intensity must be finite and non-negative, got {0}")]
    InvalidIntensity(f64),
    #[error("sigma multiplier must be positive, got {0}")]
    InvalidMultiplier(f64),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeviationKind {
    Ratio,
    #[default]
    Poisson,
}

/// Upper-branch tail used by the Poisson deviation.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Survival {
    /// `-ln P(X > f)`, the complement of the CDF at `f`.
    #[default]
    Greater,
    /// `-ln P(X >= f)`.
    GreaterOrEqual,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DeviationFunction {
    pub kind: DeviationKind,
    #[serde(default)]
    pub survival: Survival,
}

impl DeviationFunction {
    pub fn ratio() -> Self {
        Self {
            kind: DeviationKind::Ratio,
            survival: Survival::Greater,
        }
    }

    pub fn poisson() -> Self {
        Self {
            kind: DeviationKind::Poisson,
            survival: Survival::Greater,
        }
    }

    pub fn apply(&self, observed: u64, expected: f64) -> Deviation {
        match self.kind {
            DeviationKind::Ratio => deviation_ratio(observed, expected),
            DeviationKind::Poisson => deviation_poisson(observed, expected, self.survival),
        }
    }

    /// Deviation value of a perfectly expected observation.
    pub fn neutral(&self) -> f64 {
        match self.kind {
            DeviationKind::Ratio => 1.0,
            DeviationKind::Poisson => 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", content = "value", rename_all = "snake_case")]
pub enum Deviation {
    Finite(f64),
    /// Impossible under the model; reported at [`CAP`], kept out of stats.
    Capped(f64),
    /// No expected value could be formed.
    Unsupported,
}

impl Deviation {
    pub fn finite(&self) -> Option<f64> {
        match self {
            Deviation::Finite(v) => Some(*v),
            _ => None,
        }
    }

    /// Numeric value for display; `None` when unsupported.
    pub fn value(&self) -> Option<f64> {
        match self {
            Deviation::Finite(v) | Deviation::Capped(v) => Some(*v),
            Deviation::Unsupported => None,
        }
    }
}

/// `observed / expected`; `(0, 0)` is neutral.
pub fn deviation_ratio(observed: u64, expected: f64) -> Deviation {
    if !(expected >= 0.0) || !expected.is_finite() {
        return Deviation::Unsupported;
    }
    if expected == 0.0 {
        return if observed == 0 {
            Deviation::Finite(1.0)
        } else {
            Deviation::Unsupported
        };
    }
    Deviation::Finite(observed as f64 / expected)
}

/// `P(X <= k)` for `X ~ Poisson(lambda)`.
pub fn poisson_cdf(k: u64, lambda: f64) -> Result<f64, DeviationError> {
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(DeviationError::InvalidIntensity(lambda));
    }
    Ok(log_tails(k, lambda).ln_cdf.exp())
}

/// Signed log-probability of `observed` under `Poisson(expected)`:
/// `ln P(X <= f)` when `f <= expected`, otherwise the negated log of the
/// upper tail selected by `survival`.
pub fn deviation_poisson(observed: u64, expected: f64, survival: Survival) -> Deviation {
    if !(expected >= 0.0) || !expected.is_finite() {
        return Deviation::Unsupported;
    }
    if expected == 0.0 {
        return if observed == 0 {
            Deviation::Finite(0.0)
        } else {
            Deviation::Capped(CAP)
        };
    }
    let f = observed as f64;
    if f <= expected {
        Deviation::Finite(log_tails(observed, expected).ln_cdf)
    } else {
        let ln_sf = match survival {
            Survival::Greater => log_tails(observed, expected).ln_sf,
            // observed > expected > 0, so observed >= 1
            Survival::GreaterOrEqual => log_tails(observed - 1, expected).ln_sf,
        };
        Deviation::Finite(-ln_sf)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    #[default]
    Both,
    Positive,
    Negative,
}

/// Location/scale estimator behind the sigma rule.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Center {
    /// Mean and population standard deviation.
    #[default]
    Mean,
    /// Median and 1.4826 * MAD.
    Median,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OutlierPolicy {
    pub sigma_multiplier: f64,
    #[serde(default)]
    pub side: Side,
    #[serde(default)]
    pub center: Center,
}

impl Default for OutlierPolicy {
    fn default() -> Self {
        Self {
            sigma_multiplier: 3.0,
            side: Side::Both,
            center: Center::Mean,
        }
    }
}

impl OutlierPolicy {
    pub fn new(sigma_multiplier: f64) -> Result<Self, DeviationError> {
        if !(sigma_multiplier > 0.0) || !sigma_multiplier.is_finite() {
            return Err(DeviationError::InvalidMultiplier(sigma_multiplier));
        }
        Ok(Self {
            sigma_multiplier,
            ..Self::default()
        })
    }

    pub fn with_side(mut self, side: Side) -> Self {
        self.side = side;
        self
    }

    pub fn with_center(mut self, center: Center) -> Self {
        self.center = center;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellEvaluation {
    pub coord: Coord,
    pub observed: u64,
    pub expected: f64,
    pub deviation: Deviation,
}

/// Observed, expected and deviation values of one context.
#[derive(Debug, Clone)]
pub struct ContextEvaluation {
    pub dims: Vec<Dimension>,
    pub cells: Vec<CellEvaluation>,
    pub stats: DeviationStats,
    pub function: DeviationFunction,
    pub policy: OutlierPolicy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sign {
    Positive,
    Negative,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Outlier {
    /// Index into [`ContextEvaluation::cells`].
    pub index: usize,
    pub sign: Sign,
    /// Distance from the center in units of the spread.
    pub score: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum OutlierWarning {
    TooFewValues,
    ZeroSpread,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct OutlierSet {
    pub outliers: Vec<Outlier>,
    /// Capped and unsupported cells; never part of the statistics.
    pub excluded: Vec<usize>,
    pub warning: Option<OutlierWarning>,
}

impl OutlierSet {
    pub fn positive(&self) -> impl Iterator<Item = &Outlier> {
        self.outliers.iter().filter(|o| o.sign == Sign::Positive)
    }

    pub fn contains(&self, index: usize) -> Option<Sign> {
        self.outliers
            .binary_search_by_key(&index, |o| o.index)
            .ok()
            .map(|i| self.outliers[i].sign)
    }
}

impl ContextEvaluation {
    pub fn from_field(field: &ExpectedField, function: DeviationFunction, policy: OutlierPolicy) -> Self {
        let cells: Vec<CellEvaluation> = field
            .cells
            .iter()
            .map(|c| CellEvaluation {
                coord: c.coord.clone(),
                observed: c.observed,
                expected: c.expected,
                deviation: if c.unsupported {
                    Deviation::Unsupported
                } else {
                    function.apply(c.observed, c.expected)
                },
            })
            .collect();
        let finite: Vec<f64> = cells.iter().filter_map(|c| c.deviation.finite()).collect();
        Self {
            dims: field.dims.clone(),
            stats: DeviationStats::compute(&finite),
            cells,
            function,
            policy,
        }
    }

    pub fn labels(&self, coord: &[u32]) -> Vec<String> {
        self.dims
            .iter()
            .zip(coord)
            .map(|(d, &id)| d.label(id).to_owned())
            .collect()
    }

    pub fn dim_index(&self, name: &str) -> Option<usize> {
        self.dims.iter().position(|d| d.name() == name)
    }

    pub fn find(&self, labels: &[&str]) -> Option<&CellEvaluation> {
        self.cells
            .iter()
            .find(|c| self.labels(&c.coord).iter().zip(labels).all(|(a, b)| a == b))
    }

    pub fn outliers(&self) -> OutlierSet {
        detect_outliers(self)
    }

    /// Number of distinct finite deviation values (to 1e-9).
    pub fn distinct_deviations(&self) -> usize {
        let mut v: Vec<f64> = self.cells.iter().filter_map(|c| c.deviation.finite()).collect();
        v.sort_by(f64::total_cmp);
        v.dedup_by(|a, b| (*a - *b).abs() < 1e-9);
        v.len()
    }

    /// Sparse histogram of finite deviations, bins aligned on multiples of
    /// `bin_width`.
    pub fn histogram(&self, bin_width: f64) -> Vec<HistogramBin> {
        assert!(bin_width > 0.0, "bin width must be positive");
        let mut bins: std::collections::BTreeMap<i64, u64> = std::collections::BTreeMap::new();
        for d in self.cells.iter().filter_map(|c| c.deviation.finite()) {
            *bins.entry((d / bin_width).floor() as i64).or_insert(0) += 1;
        }
        bins.into_iter()
            .map(|(k, count)| HistogramBin {
                lo: k as f64 * bin_width,
                hi: (k + 1) as f64 * bin_width,
                count,
            })
            .collect()
    }

    /// One JSON object per cell: `{coord, observed, expected, deviation,
    /// status, outlier, sign}`.
    pub fn json_lines(&self, outliers: &OutlierSet) -> String {
        let mut out = String::new();
        for (i, c) in self.cells.iter().enumerate() {
            let sign = outliers.contains(i);
            let line = serde_json::json!({
                "coord": self.labels(&c.coord),
                "observed": c.observed,
                "expected": c.expected,
                "deviation": c.deviation.value(),
                "status": match c.deviation {
                    Deviation::Finite(_) => "ok",
                    Deviation::Capped(_) => "capped",
                    Deviation::Unsupported => "unsupported",
                },
                "outlier": sign.is_some(),
                "sign": sign,
            });
            out.push_str(&line.to_string());
            out.push('\n');
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HistogramBin {
    pub lo: f64,
    pub hi: f64,
    pub count: u64,
}

/// Flags cells whose deviation lies more than `sigma_multiplier` spreads
/// from the center, on the side(s) selected by the policy.
pub fn detect_outliers(eval: &ContextEvaluation) -> OutlierSet {
    let policy = eval.policy;
    let excluded: Vec<usize> = eval
        .cells
        .iter()
        .enumerate()
        .filter(|(_, c)| c.deviation.finite().is_none())
        .map(|(i, _)| i)
        .collect();
    let stats = &eval.stats;
    if stats.count < 2 {
        log::warn!("fewer than two finite deviations; no outliers");
        return OutlierSet {
            outliers: Vec::new(),
            excluded,
            warning: Some(OutlierWarning::TooFewValues),
        };
    }
    let (center, spread) = match policy.center {
        Center::Mean => (stats.mean, stats.std),
        Center::Median => (stats.median, stats::MAD_SCALE * stats.mad),
    };
    if spread <= 1e-12 * center.abs().max(1.0) {
        log::warn!("deviations have zero spread; no outliers");
        return OutlierSet {
            outliers: Vec::new(),
            excluded,
            warning: Some(OutlierWarning::ZeroSpread),
        };
    }
    let threshold = policy.sigma_multiplier * spread;
    let outliers = eval
        .cells
        .iter()
        .enumerate()
        .filter_map(|(index, c)| {
            let d = c.deviation.finite()?;
            let dist = d - center;
            if dist.abs() <= threshold {
                return None;
            }
            let sign = if dist > 0.0 { Sign::Positive } else { Sign::Negative };
            let wanted = match policy.side {
                Side::Both => true,
                Side::Positive => sign == Sign::Positive,
                Side::Negative => sign == Sign::Negative,
            };
            wanted.then_some(Outlier {
                index,
                sign,
                score: dist / spread,
            })
        })
        .collect();
    OutlierSet {
        outliers,
        excluded,
        warning: None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use smallvec::smallvec;

    /// `P(X <= k)` by summing pmf terms with the product recurrence.
    fn cdf_oracle(k: u64, lambda: f64) -> f64 {
        let mut p = (-lambda).exp();
        let mut total = p;
        for i in 1..=k {
            p *= lambda / i as f64;
            total += p;
        }
        total
    }

    fn eval_of(devs: &[f64], policy: OutlierPolicy) -> ContextEvaluation {
        let cells: Vec<CellEvaluation> = devs
            .iter()
            .enumerate()
            .map(|(i, &d)| CellEvaluation {
                coord: smallvec![i as u32],
                observed: 0,
                expected: 0.0,
                deviation: Deviation::Finite(d),
            })
            .collect();
        ContextEvaluation {
            dims: Vec::new(),
            stats: DeviationStats::compute(devs),
            cells,
            function: DeviationFunction::poisson(),
            policy,
        }
    }

    #[test]
    fn ratio_examples() {
        assert_eq!(deviation_ratio(2, 1.0), Deviation::Finite(2.0));
        assert_eq!(deviation_ratio(2000, 1000.0), Deviation::Finite(2.0));
        assert_eq!(deviation_ratio(7, 7.0), Deviation::Finite(1.0));
        assert_eq!(deviation_ratio(0, 5.0), Deviation::Finite(0.0));
        assert_eq!(deviation_ratio(0, 0.0), Deviation::Finite(1.0));
        assert_eq!(deviation_ratio(3, 0.0), Deviation::Unsupported);
    }

    #[test]
    fn cdf_examples() {
        assert!((poisson_cdf(0, 2.0).unwrap() - (-2.0f64).exp()).abs() < 1e-15);
        assert!((poisson_cdf(5, 1.0).unwrap() - cdf_oracle(5, 1.0)).abs() < 1e-15);
        assert!((poisson_cdf(5, 1.0).unwrap() - 0.999_405_8).abs() < 1e-7);
        for k in [0, 3, 1000] {
            assert_eq!(poisson_cdf(k, 0.0).unwrap(), 1.0);
        }
        assert!(matches!(
            poisson_cdf(1, -0.5),
            Err(DeviationError::InvalidIntensity(_))
        ));
    }

    #[test]
    fn poisson_examples() {
        let d = deviation_poisson(0, 2.0, Survival::Greater).finite().unwrap();
        assert!((d + 2.0).abs() < 1e-12);
        let d = deviation_poisson(5, 1.0, Survival::Greater).finite().unwrap();
        assert!((d - (-(1.0 - cdf_oracle(5, 1.0)).ln())).abs() < 1e-9);
        assert!((d - 7.428).abs() < 1e-3);
        let d = deviation_poisson(3, 3.0, Survival::Greater).finite().unwrap();
        assert!((d - cdf_oracle(3, 3.0).ln()).abs() < 1e-12);
        assert!((d + 0.435).abs() < 1e-3);
    }

    #[test]
    fn poisson_zero_intensity() {
        assert_eq!(deviation_poisson(0, 0.0, Survival::Greater), Deviation::Finite(0.0));
        assert_eq!(deviation_poisson(4, 0.0, Survival::Greater), Deviation::Capped(CAP));
    }

    #[test]
    fn geq_survival_uses_inclusive_tail() {
        // P(X >= 5 | 1) = 1 - P(X <= 4)
        let d = deviation_poisson(5, 1.0, Survival::GreaterOrEqual).finite().unwrap();
        assert!((d - (-(1.0 - cdf_oracle(4, 1.0)).ln())).abs() < 1e-9);
        // lower branch is unaffected
        assert_eq!(
            deviation_poisson(2, 3.0, Survival::GreaterOrEqual),
            deviation_poisson(2, 3.0, Survival::Greater)
        );
    }

    #[test]
    fn single_spike_among_zeros() {
        let mut devs = vec![0.0; 20];
        devs.push(5.0);
        let e = eval_of(&devs, OutlierPolicy::default());
        assert!((e.stats.mean - 0.238_095).abs() < 1e-6);
        assert!((e.stats.std - 1.064_794).abs() < 1e-6);
        let o = e.outliers();
        assert_eq!(o.outliers.len(), 1);
        assert_eq!(o.outliers[0].index, 20);
        assert_eq!(o.outliers[0].sign, Sign::Positive);
    }

    #[test]
    fn constant_deviations_have_no_outliers() {
        let e = eval_of(&[1.5; 30], OutlierPolicy::default());
        let o = e.outliers();
        assert!(o.outliers.is_empty());
        assert_eq!(o.warning, Some(OutlierWarning::ZeroSpread));
        let e = eval_of(&[1.5], OutlierPolicy::default());
        assert_eq!(e.outliers().warning, Some(OutlierWarning::TooFewValues));
    }

    #[test]
    fn side_selection() {
        let mut devs = vec![0.0; 40];
        devs.push(9.0);
        devs.push(-9.0);
        let both = eval_of(&devs, OutlierPolicy::default()).outliers();
        assert_eq!(both.outliers.len(), 2);
        let pos = eval_of(&devs, OutlierPolicy::default().with_side(Side::Positive)).outliers();
        assert_eq!(pos.outliers.len(), 1);
        assert_eq!(pos.outliers[0].sign, Sign::Positive);
    }

    #[test]
    fn robust_center_resists_inflation() {
        // two huge values inflate sigma enough to hide a moderate one
        let mut devs: Vec<f64> = (0..50).map(|i| (i % 5) as f64 * 0.1).collect();
        devs.extend([1000.0, 1000.0, 6.0]);
        let mean = eval_of(&devs, OutlierPolicy::default()).outliers();
        assert!(mean.contains(52).is_none());
        let robust = eval_of(&devs, OutlierPolicy::default().with_center(Center::Median)).outliers();
        assert_eq!(robust.contains(52), Some(Sign::Positive));
    }

    #[test]
    fn excluded_cells_are_reported() {
        let mut e = eval_of(&[0.0, 1.0, 0.5, 0.2], OutlierPolicy::default());
        e.cells[1].deviation = Deviation::Capped(CAP);
        e.cells[2].deviation = Deviation::Unsupported;
        let finite: Vec<f64> = e.cells.iter().filter_map(|c| c.deviation.finite()).collect();
        e.stats = DeviationStats::compute(&finite);
        assert_eq!(e.outliers().excluded, vec![1, 2]);
        assert_eq!(e.stats.count, 2);
    }

    #[test]
    fn invalid_multiplier() {
        assert!(OutlierPolicy::new(0.0).is_err());
        assert!(OutlierPolicy::new(-1.0).is_err());
        assert!(OutlierPolicy::new(f64::NAN).is_err());
        assert_eq!(OutlierPolicy::new(2.5).unwrap().sigma_multiplier, 2.5);
    }

    #[test]
    fn histogram_bins_are_aligned() {
        let e = eval_of(&[0.05, 0.15, 0.12, -0.3], OutlierPolicy::default());
        let h = e.histogram(0.1);
        let counts: Vec<(i64, u64)> = h.iter().map(|b| ((b.lo * 10.0).round() as i64, b.count)).collect();
        assert_eq!(counts, vec![(-3, 1), (0, 1), (1, 2)]);
    }
}
