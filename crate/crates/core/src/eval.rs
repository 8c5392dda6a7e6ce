//! Toy-scale quality metrics: distance to the clean manifold and a sliced
//! 1-D Wasserstein distance on the intrinsic coordinates.

use std::fmt::Write as _;

use ndarray::Array1;

use crate::dataset::{distance_to_m0, SampleBatch};
use crate::error::{Error, Result};
use crate::rng;
use crate::schedule::fmt_real;

pub const DEFAULT_PROJECTIONS: usize = 128;
pub const DEFAULT_EVAL_SAMPLES: usize = 4096;

fn manifold_distances(samples: &SampleBatch, intrinsic_dim: usize) -> Result<Vec<f64>> {
    if samples.dim() <= intrinsic_dim {
        return Err(Error::Parameter(format!(
            "ambient dimension {} must exceed d'={intrinsic_dim}",
            samples.dim()
        )));
    }
    if samples.is_empty() {
        return Err(Error::Parameter("empty batch".into()));
    }
    Ok(samples
        .data()
        .rows()
        .into_iter()
        .map(|r| distance_to_m0(r, intrinsic_dim))
        .collect())
}

pub fn mean_manifold_distance(samples: &SampleBatch, intrinsic_dim: usize) -> Result<f64> {
    let d = manifold_distances(samples, intrinsic_dim)?;
    Ok(d.iter().sum::<f64>() / d.len() as f64)
}

pub fn median_manifold_distance(samples: &SampleBatch, intrinsic_dim: usize) -> Result<f64> {
    let mut d = manifold_distances(samples, intrinsic_dim)?;
    d.sort_by(f64::total_cmp);
    let n = d.len();
    Ok(if n % 2 == 1 {
        d[n / 2]
    } else {
        0.5 * (d[n / 2 - 1] + d[n / 2])
    })
}

/// W1 between two empirical distributions on the line, each sorted ascending.
/// Sizes may differ; quantile functions are compared piecewise.
pub fn wasserstein_1d_sorted(a: &[f64], b: &[f64]) -> f64 {
    let (n, m) = (a.len() as u128, b.len() as u128);
    if n == 0 || m == 0 {
        return 0.0;
    }
    // breakpoints on the common grid 1/(n·m)
    let (mut i, mut j) = (0usize, 0usize);
    let mut u = 0u128;
    let mut total = 0.0;
    while (i as u128) < n && (j as u128) < m {
        let next_a = (i as u128 + 1) * m;
        let next_b = (j as u128 + 1) * n;
        let next = next_a.min(next_b);
        total += (next - u) as f64 * (a[i] - b[j]).abs();
        u = next;
        if next_a == next {
            i += 1;
        }
        if next_b == next {
            j += 1;
        }
    }
    total / (n * m) as f64
}

/// Mean over `projections` random unit directions in the first `d′`
/// coordinates of the 1-D W1 distance between the projected samples.
pub fn sliced_distance(
    a: &SampleBatch,
    b: &SampleBatch,
    intrinsic_dim: usize,
    projections: usize,
    seed: u64,
) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::Dimension {
            expected: a.dim(),
            actual: b.dim(),
        });
    }
    if a.is_empty() || b.is_empty() {
        return Err(Error::Parameter("sliced distance needs non-empty batches".into()));
    }
    if projections == 0 {
        return Err(Error::Parameter("need at least one projection".into()));
    }
    if intrinsic_dim == 0 || intrinsic_dim > a.dim() {
        return Err(Error::Parameter(format!("bad intrinsic dimension {intrinsic_dim}")));
    }
    let mut g = rng::seeded(seed);
    let ia = a.data().slice(ndarray::s![.., ..intrinsic_dim]);
    let ib = b.data().slice(ndarray::s![.., ..intrinsic_dim]);
    let mut total = 0.0;
    let mut dir = Array1::zeros(intrinsic_dim);
    for _ in 0..projections {
        loop {
            rng::fill_normal(&mut g, dir.as_slice_mut().unwrap());
            let norm = dir.dot(&dir).sqrt();
            if norm > 1e-12 {
                dir /= norm;
                break;
            }
        }
        let mut pa = ia.dot(&dir).to_vec();
        let mut pb = ib.dot(&dir).to_vec();
        pa.sort_by(f64::total_cmp);
        pb.sort_by(f64::total_cmp);
        total += wasserstein_1d_sorted(&pa, &pb);
    }
    Ok(total / projections as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub mean_manifold_distance: f64,
    pub median_manifold_distance: f64,
    pub sliced_distance: f64,
    pub shell_coverage_by_step: Option<Vec<f64>>,
    pub n_generated: usize,
    pub n_reference: usize,
}

pub const REPORT_CSV_HEADER: &str =
    "n_generated,n_reference,mean_manifold_distance,median_manifold_distance,sliced_distance";

impl EvalReport {
    pub fn validate(&self) -> Result<()> {
        let metrics = [
            self.mean_manifold_distance,
            self.median_manifold_distance,
            self.sliced_distance,
        ];
        let cov = self.shell_coverage_by_step.iter().flatten();
        if metrics.iter().chain(cov).any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::Parameter("report metrics must be finite and >= 0".into()));
        }
        Ok(())
    }

    /// `key=value` lines.
    pub fn to_key_value(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "n_generated={}", self.n_generated);
        let _ = writeln!(out, "n_reference={}", self.n_reference);
        let _ = writeln!(out, "mean_manifold_distance={}", fmt_real(self.mean_manifold_distance));
        let _ = writeln!(out, "median_manifold_distance={}", fmt_real(self.median_manifold_distance));
        let _ = writeln!(out, "sliced_distance={}", fmt_real(self.sliced_distance));
        if let Some(cov) = &self.shell_coverage_by_step {
            let cells: Vec<String> = cov.iter().map(|v| fmt_real(*v)).collect();
            let _ = writeln!(out, "shell_coverage_by_step={}", cells.join(";"));
        }
        out
    }

    pub fn from_key_value(text: &str) -> Result<Self> {
        let mut get = std::collections::HashMap::new();
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Parameter(format!("malformed report line `{line}`")))?;
            get.insert(k.trim(), v.trim());
        }
        let field = |k: &str| -> Result<&str> {
            get.get(k)
                .copied()
                .ok_or_else(|| Error::Parameter(format!("report lacks `{k}`")))
        };
        let real = |k: &str| -> Result<f64> {
            field(k)?
                .parse()
                .map_err(|_| Error::Parameter(format!("bad value for `{k}`")))
        };
        let count = |k: &str| -> Result<usize> {
            field(k)?
                .parse()
                .map_err(|_| Error::Parameter(format!("bad value for `{k}`")))
        };
        let coverage = match get.get("shell_coverage_by_step") {
            None => None,
            Some(v) => Some(
                v.split(';')
                    .map(|c| c.parse::<f64>())
                    .collect::<std::result::Result<Vec<_>, _>>()
                    .map_err(|_| Error::Parameter("bad shell coverage list".into()))?,
            ),
        };
        Ok(EvalReport {
            mean_manifold_distance: real("mean_manifold_distance")?,
            median_manifold_distance: real("median_manifold_distance")?,
            sliced_distance: real("sliced_distance")?,
            shell_coverage_by_step: coverage,
            n_generated: count("n_generated")?,
            n_reference: count("n_reference")?,
        })
    }

    /// One row matching [`REPORT_CSV_HEADER`].
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{}",
            self.n_generated,
            self.n_reference,
            fmt_real(self.mean_manifold_distance),
            fmt_real(self.median_manifold_distance),
            fmt_real(self.sliced_distance)
        )
    }
}

/// Evaluates `generated` against clean `reference` samples.
pub fn evaluate(
    generated: &SampleBatch,
    reference: &SampleBatch,
    intrinsic_dim: usize,
    projections: usize,
    seed: u64,
) -> Result<EvalReport> {
    let report = EvalReport {
        mean_manifold_distance: mean_manifold_distance(generated, intrinsic_dim)?,
        median_manifold_distance: median_manifold_distance(generated, intrinsic_dim)?,
        sliced_distance: sliced_distance(generated, reference, intrinsic_dim, projections, seed)?,
        shell_coverage_by_step: None,
        n_generated: generated.len(),
        n_reference: reference.len(),
    };
    report.validate()?;
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preferred {
    A,
    B,
    Tie,
}

impl Preferred {
    fn label(self) -> &'static str {
        match self {
            Preferred::A => "a",
            Preferred::B => "b",
            Preferred::Tie => "tie",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricDelta {
    pub metric: String,
    pub a: f64,
    pub b: f64,
    /// `b − a`
    pub delta: f64,
    /// Lower is better for every metric except coverage.
    pub preferred: Preferred,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub rows: Vec<MetricDelta>,
}

impl Comparison {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("metric,a,b,delta,preferred\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                r.metric,
                fmt_real(r.a),
                fmt_real(r.b),
                fmt_real(r.delta),
                r.preferred.label()
            );
        }
        out
    }

    pub fn row(&self, metric: &str) -> Option<&MetricDelta> {
        self.rows.iter().find(|r| r.metric == metric)
    }
}

fn metric_row(metric: String, a: f64, b: f64, lower_is_better: bool) -> MetricDelta {
    let preferred = if a == b {
        Preferred::Tie
    } else if (a < b) == lower_is_better {
        Preferred::A
    } else {
        Preferred::B
    };
    MetricDelta {
        metric,
        a,
        b,
        delta: b - a,
        preferred,
    }
}

/// Metric-by-metric deltas between two reports from identical settings.
/// Coverage rows appear only when both reports carry coverage.
pub fn compare_schedules(a: &EvalReport, b: &EvalReport) -> Result<Comparison> {
    if a.n_generated != b.n_generated || a.n_reference != b.n_reference {
        return Err(Error::Parameter(format!(
            "reports use different sample counts: ({}, {}) vs ({}, {})",
            a.n_generated, a.n_reference, b.n_generated, b.n_reference
        )));
    }
    let mut rows = vec![
        metric_row("mean_manifold_distance".into(), a.mean_manifold_distance, b.mean_manifold_distance, true),
        metric_row("median_manifold_distance".into(), a.median_manifold_distance, b.median_manifold_distance, true),
        metric_row("sliced_distance".into(), a.sliced_distance, b.sliced_distance, true),
    ];
    if let (Some(ca), Some(cb)) = (&a.shell_coverage_by_step, &b.shell_coverage_by_step) {
        if ca.len() != cb.len() {
            return Err(Error::Parameter("coverage grids differ".into()));
        }
        for (i, (x, y)) in ca.iter().zip(cb).enumerate() {
            rows.push(metric_row(format!("shell_coverage_{i}"), *x, *y, false));
        }
    }
    Ok(Comparison { rows })
}
