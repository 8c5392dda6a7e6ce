//! Toy clean-data manifolds and their zero-padded embedding.

use std::io::{BufRead, Write};

use ndarray::{Array2, ArrayView1, Axis};
use rand::Rng;

use crate::error::{Error, Result};
use crate::rng;
use crate::schedule::fmt_real;

/// Default Swiss-roll jitter.
pub const DEFAULT_SWISS_ROLL_NOISE: f64 = 0.01;

const THETA_MIN: f64 = 1.5 * std::f64::consts::PI;
const THETA_MAX: f64 = 4.5 * std::f64::consts::PI;

/// `n × D` samples, one per row, with optional class labels.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleBatch {
    data: Array2<f64>,
    labels: Option<Vec<usize>>,
}

impl SampleBatch {
    pub fn new(data: Array2<f64>, labels: Option<Vec<usize>>) -> Result<Self> {
        if let Some(l) = &labels {
            if l.len() != data.nrows() {
                return Err(Error::Dimension {
                    expected: data.nrows(),
                    actual: l.len(),
                });
            }
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Parameter("batch contains non-finite entries".into()));
        }
        Ok(SampleBatch { data, labels })
    }

    pub fn data(&self) -> &Array2<f64> {
        &self.data
    }

    pub fn into_data(self) -> Array2<f64> {
        self.data
    }

    pub fn labels(&self) -> Option<&[usize]> {
        self.labels.as_deref()
    }

    pub fn len(&self) -> usize {
        self.data.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.data.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.data.ncols()
    }

    /// One more than the largest label, or 0 without labels.
    pub fn num_classes(&self) -> usize {
        self.labels
            .as_ref()
            .and_then(|l| l.iter().max().map(|m| m + 1))
            .unwrap_or(0)
    }

    pub fn row(&self, i: usize) -> ArrayView1<'_, f64> {
        self.data.row(i)
    }

    pub fn column_means(&self) -> Vec<f64> {
        if self.is_empty() {
            return vec![0.0; self.dim()];
        }
        self.data.mean_axis(Axis(0)).unwrap().to_vec()
    }

    fn center(&mut self) {
        if self.is_empty() {
            return;
        }
        let mean = self.data.mean_axis(Axis(0)).unwrap();
        self.data -= &mean;
    }

    /// Header `dim_0,…,dim_{D−1}[,label]`; reals with 17 significant digits.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let mut header: Vec<String> = (0..self.dim()).map(|j| format!("dim_{j}")).collect();
        if self.labels.is_some() {
            header.push("label".into());
        }
        writeln!(w, "{}", header.join(","))?;
        for (i, row) in self.data.rows().into_iter().enumerate() {
            let mut cells: Vec<String> = row.iter().map(|&v| fmt_real(v)).collect();
            if let Some(l) = &self.labels {
                cells.push(l[i].to_string());
            }
            writeln!(w, "{}", cells.join(","))?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Csv("missing header".into()))??;
        let cols: Vec<&str> = header.trim_end().split(',').collect();
        let has_label = cols.last() == Some(&"label");
        let dim = cols.len() - usize::from(has_label);
        for (j, c) in cols[..dim].iter().enumerate() {
            if *c != format!("dim_{j}") {
                return Err(Error::Csv(format!("unexpected header column `{c}`")));
            }
        }
        let mut values = Vec::new();
        let mut labels = Vec::new();
        let mut rows = 0;
        for (lineno, line) in lines.enumerate() {
            let line = line?;
            let line = line.trim_end();
            if line.is_empty() {
                continue;
            }
            let cells: Vec<&str> = line.split(',').collect();
            if cells.len() != cols.len() {
                return Err(Error::Csv(format!(
                    "row {} has {} cells, expected {}",
                    lineno + 1,
                    cells.len(),
                    cols.len()
                )));
            }
            for c in &cells[..dim] {
                let v: f64 = c
                    .parse()
                    .map_err(|_| Error::Csv(format!("bad real `{c}` in row {}", lineno + 1)))?;
                values.push(v);
            }
            if has_label {
                let l: usize = cells[dim]
                    .parse()
                    .map_err(|_| Error::Csv(format!("bad label in row {}", lineno + 1)))?;
                labels.push(l);
            }
            rows += 1;
        }
        let data = Array2::from_shape_vec((rows, dim), values)
            .map_err(|e| Error::Csv(e.to_string()))?;
        SampleBatch::new(data, has_label.then_some(labels))
    }
}

/// Result of [`swiss_roll_raw`]: the batch plus the centring shift and
/// scale that map it back onto the raw spiral, `raw = x · scale + shift`.
#[derive(Debug, Clone)]
pub struct SwissRoll {
    pub batch: SampleBatch,
    pub shift: [f64; 2],
    pub scale: f64,
}

/// Planar Swiss roll, centred and rescaled to unit maximum radius.
///
/// `θ ~ U[1.5π, 4.5π]`, radius `θ / 4.5π`, point `(r cos θ, r sin θ)` plus
/// isotropic Gaussian jitter of scale `noise_scale`.
pub fn swiss_roll(n: usize, noise_scale: f64, seed: u64) -> Result<SampleBatch> {
    Ok(swiss_roll_raw(n, noise_scale, seed)?.batch)
}

pub fn swiss_roll_raw(n: usize, noise_scale: f64, seed: u64) -> Result<SwissRoll> {
    if n == 0 {
        return Err(Error::Parameter("swiss roll needs n >= 1".into()));
    }
    if !(noise_scale >= 0.0) {
        return Err(Error::Parameter(format!("noise_scale must be >= 0, got {noise_scale}")));
    }
    let mut g = rng::seeded(seed);
    let mut data = Array2::zeros((n, 2));
    for mut row in data.rows_mut() {
        let theta = g.random_range(THETA_MIN..THETA_MAX);
        let r = theta / THETA_MAX;
        row[0] = r * theta.cos();
        row[1] = r * theta.sin();
        if noise_scale > 0.0 {
            row[0] += noise_scale * rng::normal(&mut g);
            row[1] += noise_scale * rng::normal(&mut g);
        }
    }
    let mean = data.mean_axis(Axis(0)).unwrap();
    data -= &mean;
    let max_r = data
        .rows()
        .into_iter()
        .map(|r| r.dot(&r).sqrt())
        .fold(0.0, f64::max);
    let scale = if max_r > 0.0 { max_r } else { 1.0 };
    data /= scale;
    Ok(SwissRoll {
        batch: SampleBatch::new(data, None)?,
        shift: [mean[0], mean[1]],
        scale,
    })
}

/// Equal-weight isotropic Gaussian mixture in the plane, labelled by
/// component and mean-centred.
pub fn gaussian_mixture(n: usize, centers: &[[f64; 2]], scale: f64, seed: u64) -> Result<SampleBatch> {
    if centers.is_empty() {
        return Err(Error::Parameter("gaussian mixture needs at least one center".into()));
    }
    if !(scale > 0.0) {
        return Err(Error::Parameter(format!("mixture scale must be > 0, got {scale}")));
    }
    let mut g = rng::seeded(seed);
    let mut data = Array2::zeros((n, 2));
    let mut labels = Vec::with_capacity(n);
    for mut row in data.rows_mut() {
        let c = g.random_range(0..centers.len());
        row[0] = centers[c][0] + scale * rng::normal(&mut g);
        row[1] = centers[c][1] + scale * rng::normal(&mut g);
        labels.push(c);
    }
    let mut batch = SampleBatch::new(data, Some(labels))?;
    batch.center();
    Ok(batch)
}

/// `count` centers evenly spaced on a circle of `radius`, first on the +x axis.
pub fn ring_centers(count: usize, radius: f64) -> Vec<[f64; 2]> {
    (0..count)
        .map(|i| {
            let a = 2.0 * std::f64::consts::PI * i as f64 / count as f64;
            [radius * a.cos(), radius * a.sin()]
        })
        .collect()
}

/// Zero-pads every row to `target_dim` coordinates.
pub fn embed(batch: &SampleBatch, target_dim: usize) -> Result<SampleBatch> {
    if target_dim < batch.dim() {
        return Err(Error::Parameter(format!(
            "cannot embed dimension {} into {target_dim}",
            batch.dim()
        )));
    }
    let mut data = Array2::zeros((batch.len(), target_dim));
    data.slice_mut(ndarray::s![.., ..batch.dim()])
        .assign(&batch.data);
    Ok(SampleBatch {
        data,
        labels: batch.labels.clone(),
    })
}

/// Euclidean norm of coordinates `d′+1 … D` (0-based `d′..`).
pub fn distance_to_m0(x: ArrayView1<'_, f64>, intrinsic_dim: usize) -> f64 {
    x.iter()
        .skip(intrinsic_dim)
        .map(|v| v * v)
        .sum::<f64>()
        .sqrt()
}
