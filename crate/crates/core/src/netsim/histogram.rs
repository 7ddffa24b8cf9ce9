use std::fmt::Write as _;
use std::path::Path;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;

use super::NetError;

const DEFAULT_HISTOGRAM: &str = include_str!("../../data/latency_default.txt");

/// Discrete distribution of one-way pair latencies.
#[derive(Debug, Clone, PartialEq)]
pub struct LatencyHistogram {
    buckets: Vec<(f64, f64)>,
}

impl LatencyHistogram {
    /// Masses within this distance of 1 are renormalized; anything further is
    /// rejected.
    const MASS_TOLERANCE: f64 = 1e-6;

    pub fn new(buckets: Vec<(f64, f64)>) -> Result<Self, NetError> {
        if buckets.is_empty() {
            return Err(NetError::EmptyHistogram);
        }
        for &(lat, mass) in &buckets {
            if !(lat.is_finite() && lat >= 0.0) {
                return Err(NetError::InvalidBucket(format!("latency {lat}")));
            }
            if !(mass.is_finite() && mass >= 0.0) {
                return Err(NetError::InvalidBucket(format!("mass {mass}")));
            }
        }
        let total: f64 = buckets.iter().map(|b| b.1).sum();
        if (total - 1.0).abs() > Self::MASS_TOLERANCE {
            return Err(NetError::MassNotNormalized(total));
        }
        Ok(LatencyHistogram {
            buckets: buckets.into_iter().map(|(l, m)| (l, m / total)).collect(),
        })
    }

    /// The bundled synthetic histogram (log-normal, median 100 ms).
    pub fn default_synthetic() -> Self {
        Self::parse(DEFAULT_HISTOGRAM).expect("bundled histogram is well-formed")
    }

    /// A histogram with all mass on one latency.
    pub fn constant(latency: f64) -> Self {
        Self::new(vec![(latency, 1.0)]).expect("single bucket")
    }

    pub fn parse(text: &str) -> Result<Self, NetError> {
        let mut buckets = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let bad = || NetError::HistogramLine {
                line: i + 1,
                content: raw.to_string(),
            };
            let mut fields = line.split_whitespace();
            let lat: f64 = fields.next().and_then(|f| f.parse().ok()).ok_or_else(bad)?;
            let mass: f64 = fields.next().and_then(|f| f.parse().ok()).ok_or_else(bad)?;
            if fields.next().is_some() {
                return Err(bad());
            }
            buckets.push((lat, mass));
        }
        Self::new(buckets)
    }

    pub fn load(path: &Path) -> Result<Self, NetError> {
        let text = std::fs::read_to_string(path).map_err(|e| NetError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::parse(&text)
    }

    pub fn buckets(&self) -> &[(f64, f64)] {
        &self.buckets
    }

    pub fn min_latency_with_mass(&self) -> f64 {
        self.buckets
            .iter()
            .filter(|b| b.1 > 0.0)
            .map(|b| b.0)
            .fold(f64::INFINITY, f64::min)
    }

    pub fn median(&self) -> f64 {
        let mut sorted = self.buckets.clone();
        sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut acc = 0.0;
        for (lat, mass) in sorted {
            acc += mass;
            if acc >= 0.5 {
                return lat;
            }
        }
        self.buckets.last().map(|b| b.0).unwrap_or(0.0)
    }

    pub fn sampler(&self) -> LatencySampler<'_> {
        LatencySampler {
            hist: self,
            index: WeightedIndex::new(self.buckets.iter().map(|b| b.1))
                .expect("masses validated at construction"),
        }
    }

    pub fn to_text(&self) -> String {
        let mut s = String::from("# latency_seconds probability\n");
        for (l, m) in &self.buckets {
            let _ = writeln!(s, "{l} {m}");
        }
        s
    }
}

pub struct LatencySampler<'a> {
    hist: &'a LatencyHistogram,
    index: WeightedIndex<f64>,
}

impl LatencySampler<'_> {
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.hist.buckets[self.index.sample(rng)].0
    }
}
