//! Forward-process noise schedules on a uniform time grid.
//!
//! Every schedule is expressed in the unified form `x_t = c_t x_0 + σ_t z`.
//! The grid is `t_k = k / T` for `k = 0..=T`; `k = 0` is clean data and
//! `k = T` is the terminal step.
//!
//! The three variance-preserving kinds also carry the per-step variance
//! increments `β_k` and the cumulative signal power `ᾱ_k = ∏_{s≤k} (1 − β_s)`,
//! with `β_0 = 0`. For the σ-parameterised kinds `β_k` is recovered from the
//! ratio `1 − ᾱ_k / ᾱ_{k−1}`, which for the uniform-radial schedule coincides
//! with the closed form `(2tΔt − Δt²) / (1 − (t − Δt)²)` taking `Δt = 1/T`.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use crate::error::{Error, Result};

pub const DEFAULT_BETA_MIN: f64 = 1e-4;
pub const DEFAULT_BETA_MAX: f64 = 0.02;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ScheduleKind {
    /// Linear β from `beta_min` at `k = 1` to `beta_max` at `k = T`.
    ConventionalVp { beta_min: f64, beta_max: f64 },
    /// `σ_t = t`.
    UniformRadialVp,
    /// `σ_t = (e^t − 1) / (e − 1)`.
    LateExpansionVp,
    /// `c_t = 1 − t`, `σ_t = t`. Not variance preserving.
    OtGeodesic,
}

impl ScheduleKind {
    pub fn conventional() -> Self {
        ScheduleKind::ConventionalVp {
            beta_min: DEFAULT_BETA_MIN,
            beta_max: DEFAULT_BETA_MAX,
        }
    }

    pub fn is_variance_preserving(&self) -> bool {
        !matches!(self, ScheduleKind::OtGeodesic)
    }

    pub fn name(&self) -> &'static str {
        match self {
            ScheduleKind::ConventionalVp { .. } => "conventional",
            ScheduleKind::UniformRadialVp => "uniform_radial",
            ScheduleKind::LateExpansionVp => "late_expansion",
            ScheduleKind::OtGeodesic => "ot_geodesic",
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let ScheduleKind::ConventionalVp { beta_min, beta_max } = *self {
            if !(beta_min > 0.0 && beta_min <= beta_max && beta_max < 1.0) {
                return Err(Error::Parameter(format!(
                    "conventional schedule needs 0 < beta_min <= beta_max < 1, got ({beta_min}, {beta_max})"
                )));
            }
        }
        Ok(())
    }
}

impl fmt::Display for ScheduleKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Parses the kind tag only; conventional endpoints take their defaults.
impl FromStr for ScheduleKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "conventional" | "conventional_vp" => Ok(ScheduleKind::conventional()),
            "uniform_radial" | "uniform_radial_vp" => Ok(ScheduleKind::UniformRadialVp),
            "late_expansion" | "late_expansion_vp" => Ok(ScheduleKind::LateExpansionVp),
            "ot_geodesic" | "ot" => Ok(ScheduleKind::OtGeodesic),
            other => Err(Error::Parameter(format!("unknown schedule kind `{other}`"))),
        }
    }
}

/// A fully discretised schedule. Immutable after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct ScheduleSpec {
    kind: ScheduleKind,
    steps: usize,
    grid: Vec<f64>,
    c: Vec<f64>,
    sigma: Vec<f64>,
    beta: Option<Vec<f64>>,
    alpha_bar: Option<Vec<f64>>,
}

impl ScheduleSpec {
    /// Builds the schedule `kind` with `steps` = T reverse steps.
    pub fn new(kind: ScheduleKind, steps: usize) -> Result<Self> {
        kind.validate()?;
        if steps == 0 {
            return Err(Error::Parameter("schedule needs at least one step".into()));
        }
        let t_max = steps as f64;
        let grid: Vec<f64> = (0..=steps).map(|k| k as f64 / t_max).collect();

        let spec = match kind {
            ScheduleKind::ConventionalVp { beta_min, beta_max } => {
                let mut beta = Vec::with_capacity(steps + 1);
                beta.push(0.0);
                for k in 1..=steps {
                    let frac = if steps == 1 {
                        0.0
                    } else {
                        (k - 1) as f64 / (steps - 1) as f64
                    };
                    beta.push(beta_min + (beta_max - beta_min) * frac);
                }
                let mut alpha_bar = Vec::with_capacity(steps + 1);
                let mut acc = 1.0;
                for &b in &beta {
                    acc *= 1.0 - b;
                    alpha_bar.push(acc);
                }
                let c = alpha_bar.iter().map(|a| a.sqrt()).collect();
                let sigma = alpha_bar.iter().map(|a| (1.0 - a).sqrt()).collect();
                ScheduleSpec {
                    kind,
                    steps,
                    grid,
                    c,
                    sigma,
                    beta: Some(beta),
                    alpha_bar: Some(alpha_bar),
                }
            }
            ScheduleKind::UniformRadialVp | ScheduleKind::LateExpansionVp => {
                let sigma: Vec<f64> = grid
                    .iter()
                    .map(|&t| match kind {
                        ScheduleKind::UniformRadialVp => t,
                        _ => late_expansion_sigma(t),
                    })
                    .collect();
                Self::from_sigma(kind, grid, sigma)
            }
            ScheduleKind::OtGeodesic => {
                let c = grid.iter().map(|t| 1.0 - t).collect();
                let sigma = grid.clone();
                ScheduleSpec {
                    kind,
                    steps,
                    grid,
                    c,
                    sigma,
                    beta: None,
                    alpha_bar: None,
                }
            }
        };
        Ok(spec)
    }

    fn from_sigma(kind: ScheduleKind, grid: Vec<f64>, sigma: Vec<f64>) -> Self {
        let steps = grid.len() - 1;
        let alpha_bar: Vec<f64> = sigma.iter().map(|s| 1.0 - s * s).collect();
        let c = alpha_bar.iter().map(|a| a.max(0.0).sqrt()).collect();
        let mut beta = vec![0.0; steps + 1];
        for k in 1..=steps {
            beta[k] = 1.0 - alpha_bar[k] / alpha_bar[k - 1];
        }
        ScheduleSpec {
            kind,
            steps,
            grid,
            c,
            sigma,
            beta: Some(beta),
            alpha_bar: Some(alpha_bar),
        }
    }

    /// Assembles a schedule from raw sequences without checking invariants.
    /// Intended for analysis of externally supplied σ sequences; pair with
    /// [`ScheduleSpec::validate`].
    pub fn from_parts(
        kind: ScheduleKind,
        c: Vec<f64>,
        sigma: Vec<f64>,
        beta: Option<Vec<f64>>,
        alpha_bar: Option<Vec<f64>>,
    ) -> Result<Self> {
        if c.len() != sigma.len() || c.len() < 2 {
            return Err(Error::Parameter(
                "c and sigma must have equal length of at least 2".into(),
            ));
        }
        for seq in [&beta, &alpha_bar].into_iter().flatten() {
            if seq.len() != c.len() {
                return Err(Error::Dimension {
                    expected: c.len(),
                    actual: seq.len(),
                });
            }
        }
        let steps = c.len() - 1;
        let grid = (0..=steps).map(|k| k as f64 / steps as f64).collect();
        Ok(ScheduleSpec {
            kind,
            steps,
            grid,
            c,
            sigma,
            beta,
            alpha_bar,
        })
    }

    /// Variance-preserving schedule with the given σ sequence, deriving c, ᾱ, β.
    pub fn from_sigma_sequence(sigma: Vec<f64>) -> Result<Self> {
        if sigma.len() < 2 {
            return Err(Error::Parameter("sigma sequence needs at least 2 entries".into()));
        }
        let steps = sigma.len() - 1;
        let grid = (0..=steps).map(|k| k as f64 / steps as f64).collect();
        Ok(Self::from_sigma(ScheduleKind::UniformRadialVp, grid, sigma))
    }

    pub fn kind(&self) -> ScheduleKind {
        self.kind
    }

    /// Number of steps T.
    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn c(&self) -> &[f64] {
        &self.c
    }

    pub fn sigma(&self) -> &[f64] {
        &self.sigma
    }

    pub fn beta(&self) -> Option<&[f64]> {
        self.beta.as_deref()
    }

    pub fn alpha_bar(&self) -> Option<&[f64]> {
        self.alpha_bar.as_deref()
    }

    pub fn check_index(&self, k: usize) -> Result<()> {
        if k > self.steps {
            Err(Error::Index {
                index: k,
                max: self.steps,
            })
        } else {
            Ok(())
        }
    }

    pub fn time(&self, k: usize) -> Result<f64> {
        self.check_index(k)?;
        Ok(self.grid[k])
    }

    /// `(c_k, σ_k)` exactly as stored.
    pub fn coefficients(&self, k: usize) -> Result<(f64, f64)> {
        self.check_index(k)?;
        Ok((self.c[k], self.sigma[k]))
    }

    /// Increments `σ_{k+1} − σ_k` for `k = 0..T`.
    pub fn sigma_increments(&self) -> Vec<f64> {
        self.sigma.windows(2).map(|w| w[1] - w[0]).collect()
    }

    /// Checks every type invariant within `tol`. An empty list means valid.
    pub fn validate(&self, tol: f64) -> Vec<Violation> {
        let mut out = Vec::new();
        if self.sigma[0].abs() > tol {
            out.push(Violation::new(0, "σ_0 = 0"));
        }
        for k in 1..=self.steps {
            if self.sigma[k] < self.sigma[k - 1] - tol {
                out.push(Violation::new(k, "σ monotonicity"));
            }
        }
        if self.kind.is_variance_preserving() {
            for k in 0..=self.steps {
                let (c, s) = (self.c[k], self.sigma[k]);
                if (c * c + s * s - 1.0).abs() > tol {
                    out.push(Violation::new(k, "variance preservation"));
                }
            }
            match (&self.beta, &self.alpha_bar) {
                (Some(beta), Some(alpha_bar)) => {
                    let mut acc = 1.0;
                    for k in 0..=self.steps {
                        acc *= 1.0 - beta[k];
                        if (acc - alpha_bar[k]).abs() > tol {
                            out.push(Violation::new(k, "cumulative product ᾱ"));
                        }
                        if (self.c[k] - alpha_bar[k].max(0.0).sqrt()).abs() > tol {
                            out.push(Violation::new(k, "c = √ᾱ"));
                        }
                        if (self.sigma[k] - (1.0 - alpha_bar[k]).max(0.0).sqrt()).abs() > tol {
                            out.push(Violation::new(k, "σ = √(1 − ᾱ)"));
                        }
                    }
                }
                _ => out.push(Violation::new(0, "missing β/ᾱ for variance-preserving kind")),
            }
        } else {
            for k in 0..=self.steps {
                let t = self.grid[k];
                if (self.c[k] - (1.0 - t)).abs() > tol || (self.sigma[k] - t).abs() > tol {
                    out.push(Violation::new(k, "geodesic path c = 1 − t, σ = t"));
                }
            }
        }
        out
    }

    /// Writes `k,t,c,sigma,beta,alpha_bar`, leaving cells empty where undefined.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "k,t,c,sigma,beta,alpha_bar")?;
        for k in 0..=self.steps {
            let beta = self.beta.as_ref().map(|b| fmt_real(b[k])).unwrap_or_default();
            let ab = self
                .alpha_bar
                .as_ref()
                .map(|a| fmt_real(a[k]))
                .unwrap_or_default();
            writeln!(
                w,
                "{k},{},{},{},{beta},{ab}",
                fmt_real(self.grid[k]),
                fmt_real(self.c[k]),
                fmt_real(self.sigma[k]),
            )?;
        }
        Ok(())
    }
}

pub fn late_expansion_sigma(t: f64) -> f64 {
    t.exp_m1() / 1f64.exp_m1()
}

/// Decimal with 17 significant digits, enough to round-trip any `f64`.
pub fn fmt_real(x: f64) -> String {
    format!("{x:.16e}")
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub step: usize,
    pub invariant: &'static str,
}

impl Violation {
    fn new(step: usize, invariant: &'static str) -> Self {
        Violation { step, invariant }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} at k={}", self.invariant, self.step)
    }
}
