use std::time::Duration;

/// Dispersion summary of one mode's RTT samples, in microseconds.
/// With every sample lost the float fields are NaN.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StatsSummary {
    pub n: usize,
    pub lost: usize,
    pub mean: f64,
    pub median: f64,
    pub p95: f64,
    pub p99: f64,
    pub min: f64,
    pub max: f64,
    pub stddev: f64,
}

/// Nearest-rank percentile of sorted data, `q` in (0, 1].
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let rank = (q * sorted.len() as f64).ceil().max(1.0) as usize;
    sorted[rank.min(sorted.len()) - 1]
}

pub fn median(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    match n {
        0 => f64::NAN,
        _ if n % 2 == 1 => sorted[n / 2],
        _ => (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0,
    }
}

impl StatsSummary {
    pub fn from_micros(samples: &[Option<f64>]) -> StatsSummary {
        let mut v: Vec<f64> = samples.iter().flatten().copied().collect();
        v.sort_by(f64::total_cmp);
        let n = v.len();
        let mean = if n == 0 { f64::NAN } else { v.iter().sum::<f64>() / n as f64 };
        let stddev = match n {
            0 => f64::NAN,
            1 => 0.0,
            _ => (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt(),
        };
        StatsSummary {
            n,
            lost: samples.len() - n,
            mean,
            median: median(&v),
            p95: percentile(&v, 0.95),
            p99: percentile(&v, 0.99),
            min: v.first().copied().unwrap_or(f64::NAN),
            max: v.last().copied().unwrap_or(f64::NAN),
            stddev,
        }
    }

    pub fn from_rtts(samples: &[Option<Duration>]) -> StatsSummary {
        let micros: Vec<Option<f64>> = samples
            .iter()
            .map(|s| s.map(|d| d.as_secs_f64() * 1e6))
            .collect();
        StatsSummary::from_micros(&micros)
    }

    pub fn loss_ratio(&self) -> f64 {
        let total = self.n + self.lost;
        if total == 0 {
            0.0
        } else {
            self.lost as f64 / total as f64
        }
    }
}

/// Medians of consecutive blocks of `block` samples; lost samples are
/// skipped and a trailing partial block is dropped.
pub fn block_medians(samples: &[Option<f64>], block: usize) -> Vec<f64> {
    assert!(block > 0, "block size must be positive");
    samples
        .chunks_exact(block)
        .filter_map(|c| {
            let mut v: Vec<f64> = c.iter().flatten().copied().collect();
            if v.is_empty() {
                return None;
            }
            v.sort_by(f64::total_cmp);
            Some(median(&v))
        })
        .collect()
}

/// Paired sign test over per-block medians: does `a` tend to be lower than `b`?
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SignTest {
    pub pairs: usize,
    pub a_lower: usize,
    pub ties: usize,
    /// One-sided exact binomial tail P(X >= a_lower), X ~ Bin(pairs - ties, 1/2).
    pub p_value: f64,
}

pub fn sign_test(a: &[f64], b: &[f64]) -> SignTest {
    let pairs = a.len().min(b.len());
    let (mut a_lower, mut ties) = (0, 0);
    for (x, y) in a.iter().zip(b) {
        if x < y {
            a_lower += 1;
        } else if x == y {
            ties += 1;
        }
    }
    SignTest {
        pairs,
        a_lower,
        ties,
        p_value: binomial_upper_tail(pairs - ties, a_lower),
    }
}

/// P(X >= k) for X ~ Bin(n, 1/2), summed in log space so large n is safe.
pub fn binomial_upper_tail(n: usize, k: usize) -> f64 {
    if k == 0 {
        return 1.0;
    }
    if k > n {
        return 0.0;
    }
    let ln_half_n = n as f64 * 0.5f64.ln();
    let mut ln_choose = 0.0; // ln C(n, 0)
    let mut total = 0.0;
    for i in 0..=n {
        if i > 0 {
            ln_choose += ((n - i + 1) as f64).ln() - (i as f64).ln();
        }
        if i >= k {
            total += (ln_choose + ln_half_n).exp();
        }
    }
    total.min(1.0)
}
