//! Small numeric helpers shared across modules.

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    compensation: f64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, value: f64) {
        let t = self.sum + value;
        if self.sum.abs() >= value.abs() {
            self.compensation += (self.sum - t) + value;
        } else {
            self.compensation += (value - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.compensation
    }
}

impl FromIterator<f64> for CompensatedSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut acc = CompensatedSum::new();
        for v in iter {
            acc.add(v);
        }
        acc
    }
}

/// Compensated sum of a sequence.
pub fn sum(values: impl IntoIterator<Item = f64>) -> f64 {
    values.into_iter().collect::<CompensatedSum>().value()
}

/// Order-insensitive mean: values are sorted before the compensated sum so
/// that any permutation of the input gives the same bits.
pub fn stable_mean(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    Some(sum(sorted) / values.len() as f64)
}

/// Floor-bin index of `value` for bins of `width`.
pub fn floor_bin(value: f64, width: f64) -> i64 {
    (value / width).floor() as i64
}

/// Fractional ranks (ties get the mean rank), 1-based.
pub fn ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut out = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            out[idx] = rank;
        }
        i = j + 1;
    }
    out
}

/// Pearson correlation; `None` when either side has zero variance.
pub fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return None;
    }
    let n = x.len() as f64;
    let mx = sum(x.iter().copied()) / n;
    let my = sum(y.iter().copied()) / n;
    let sxy = sum(x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)));
    let sxx = sum(x.iter().map(|a| (a - mx) * (a - mx)));
    let syy = sum(y.iter().map(|b| (b - my) * (b - my)));
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some(sxy / (sxx * syy).sqrt())
}

/// Spearman rank correlation.
pub fn spearman(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() != y.len() {
        return None;
    }
    pearson(&ranks(x), &ranks(y))
}

/// One bin of a floor-binned histogram.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct HistogramBin {
    pub index: i64,
    pub lower: f64,
    pub count: usize,
    pub fraction: f64,
}

/// Floor-binned histogram of a set of non-negative quantities. Only
/// populated bins are stored, in ascending order.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Histogram {
    pub bin_width: f64,
    pub total: usize,
    pub bins: Vec<HistogramBin>,
}

impl Histogram {
    /// Returns `None` for empty input. `bin_width` must be positive.
    pub fn from_values(values: &[f64], bin_width: f64) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let mut counts = std::collections::BTreeMap::<i64, usize>::new();
        for &v in values {
            *counts.entry(floor_bin(v, bin_width)).or_default() += 1;
        }
        let total = values.len();
        let bins = counts
            .into_iter()
            .map(|(index, count)| HistogramBin {
                index,
                lower: index as f64 * bin_width,
                count,
                fraction: count as f64 / total as f64,
            })
            .collect();
        Some(Self {
            bin_width,
            total,
            bins,
        })
    }

    pub fn fraction(&self, index: i64) -> f64 {
        self.bins
            .iter()
            .find(|b| b.index == index)
            .map_or(0.0, |b| b.fraction)
    }
}
