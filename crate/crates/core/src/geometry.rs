//! Shell geometry of noisy manifolds.
//!
//! Clean data live on the axis-aligned subspace `M₀` spanned by the first
//! `d′` coordinates of `R^D`. Under a schedule with noise amplitude `σ_k`,
//! the distance of a noisy sample to `M₀` concentrates at the shell radius
//! `r_k = σ_k √(D − d′)`, inside the band `[r·√(1 − 2√ε), r·√(1 + 2√ε + 2ε)]`
//! with probability at least `1 − 2 exp(−2 (D − d′) ε)`.
//!
//! That exponent is the one stated with the shell bound. The textbook
//! Laurent–Massart inequality, `P(χ²_m − m ≥ 2√(mx) + 2x) ≤ e^{−x}` with
//! `x = mε`, gives `1 − 2e^{−(D−d′)ε}`; the stronger stated floor is used
//! verbatim here and is never the binding constraint at the dimensions tested.
//!
//! `ε` is restricted to `(0, 0.25)` so that `1 − 2√ε > 0`.

use std::io::Write;
use std::ops::Range;

use crate::error::{Error, Result};
use crate::rng;
use crate::schedule::{fmt_real, ScheduleSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AmbientConfig {
    ambient_dim: usize,
    intrinsic_dim: usize,
}

impl AmbientConfig {
    pub fn new(ambient_dim: usize, intrinsic_dim: usize) -> Result<Self> {
        if intrinsic_dim == 0 || intrinsic_dim >= ambient_dim {
            return Err(Error::Parameter(format!(
                "need 1 <= d' < D, got d'={intrinsic_dim}, D={ambient_dim}"
            )));
        }
        Ok(AmbientConfig {
            ambient_dim,
            intrinsic_dim,
        })
    }

    /// D
    pub fn ambient_dim(&self) -> usize {
        self.ambient_dim
    }

    /// d′
    pub fn intrinsic_dim(&self) -> usize {
        self.intrinsic_dim
    }

    /// D − d′
    pub fn normal_dim(&self) -> usize {
        self.ambient_dim - self.intrinsic_dim
    }
}

/// Radial band `[r₋, r₊]` of the noisy shell at one step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShellBand {
    pub step: usize,
    pub radius: f64,
    pub r_minus: f64,
    pub r_plus: f64,
    pub epsilon: f64,
    pub width: f64,
}

impl ShellBand {
    pub fn contains(&self, distance: f64) -> bool {
        self.r_minus <= distance && distance <= self.r_plus
    }
}

pub fn check_epsilon(epsilon: f64) -> Result<()> {
    if epsilon > 0.0 && epsilon < 0.25 {
        Ok(())
    } else {
        Err(Error::Parameter(format!(
            "epsilon must lie in (0, 0.25), got {epsilon}"
        )))
    }
}

/// `(√(1 − 2√ε), √(1 + 2√ε + 2ε))`
fn band_factors(epsilon: f64) -> (f64, f64) {
    let root = epsilon.sqrt();
    (
        (1.0 - 2.0 * root).sqrt(),
        (1.0 + 2.0 * root + 2.0 * epsilon).sqrt(),
    )
}

pub fn shell_radius(schedule: &ScheduleSpec, k: usize, ambient: &AmbientConfig) -> Result<f64> {
    let (_, sigma) = schedule.coefficients(k)?;
    Ok(sigma * (ambient.normal_dim() as f64).sqrt())
}

pub fn shell_band(
    schedule: &ScheduleSpec,
    k: usize,
    ambient: &AmbientConfig,
    epsilon: f64,
) -> Result<ShellBand> {
    check_epsilon(epsilon)?;
    let radius = shell_radius(schedule, k, ambient)?;
    Ok(band_for_radius(k, radius, epsilon))
}

fn band_for_radius(step: usize, radius: f64, epsilon: f64) -> ShellBand {
    let (lo, hi) = band_factors(epsilon);
    let r_minus = radius * lo;
    let r_plus = radius * hi;
    ShellBand {
        step,
        radius,
        r_minus,
        r_plus,
        epsilon,
        width: r_plus - r_minus,
    }
}

/// `ρ_ε = √((1 + 2√ε + 2ε) / (1 − 2√ε))`, the minimal adjacent σ ratio.
pub fn rho_epsilon(epsilon: f64) -> Result<f64> {
    check_epsilon(epsilon)?;
    let (lo, hi) = band_factors(epsilon);
    Ok(hi / lo)
}

/// `κ_ε = √(1 + 2√ε + 2ε) − √(1 − 2√ε)`, the relative shell width.
pub fn kappa_epsilon(epsilon: f64) -> Result<f64> {
    check_epsilon(epsilon)?;
    let (lo, hi) = band_factors(epsilon);
    Ok(hi - lo)
}

/// Smallest grid spacing `ln(1 + κ_ε)` for which the late-expansion
/// schedule is guaranteed to keep every adjacent pair of shells apart.
pub fn prop3_min_dt(epsilon: f64) -> Result<f64> {
    Ok(kappa_epsilon(epsilon)?.ln_1p())
}

/// Alternative statements of the adjacent non-overlap condition for a pair
/// `(σ_k, σ_{k+1})`. Only `Radius`, `Ratio` and `Gap` are algebraically
/// equivalent; `Increment` compares `Δr` against `κ_ε · r` and is weaker,
/// since the exact threshold is `(ρ_ε − 1) · r = κ_ε · r / √(1 − 2√ε)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Separation {
    /// `r₋(k+1) > r₊(k)`
    Radius,
    /// `Δr_k > κ_ε r_k`
    Increment,
    /// `σ_{k+1} > ρ_ε σ_k`
    Ratio,
    /// `Δσ_k > (ρ_ε − 1) σ_k`
    Gap,
}

impl Separation {
    pub const ALL: [Separation; 4] = [
        Separation::Radius,
        Separation::Increment,
        Separation::Ratio,
        Separation::Gap,
    ];

    /// Whether `(sigma, sigma_next)` is separated under this formulation.
    pub fn holds(
        self,
        sigma: f64,
        sigma_next: f64,
        epsilon: f64,
        ambient: &AmbientConfig,
    ) -> Result<bool> {
        check_epsilon(epsilon)?;
        let scale = (ambient.normal_dim() as f64).sqrt();
        let (lo, hi) = band_factors(epsilon);
        Ok(match self {
            Separation::Radius => sigma_next * scale * lo > sigma * scale * hi,
            Separation::Increment => {
                (sigma_next - sigma) * scale > sigma * scale * (hi - lo)
            }
            Separation::Ratio => sigma_next > (hi / lo) * sigma,
            Separation::Gap => sigma_next - sigma > (hi / lo - 1.0) * sigma,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairAudit {
    pub step: usize,
    pub sigma: f64,
    pub delta_sigma: f64,
    pub required_gap: f64,
    pub r_minus_next: f64,
    pub r_plus_curr: f64,
    pub pass: bool,
}

impl PairAudit {
    pub fn mixes(&self) -> bool {
        !self.pass
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DisjointnessAudit {
    pub epsilon: f64,
    pub pairs: Vec<PairAudit>,
}

impl DisjointnessAudit {
    /// Smallest k whose pair (k, k+1) mixes.
    pub fn first_failure(&self) -> Option<usize> {
        self.pairs.iter().find(|p| !p.pass).map(|p| p.step)
    }

    /// Largest k whose pair (k, k+1) mixes.
    pub fn last_failure(&self) -> Option<usize> {
        self.pairs.iter().rev().find(|p| !p.pass).map(|p| p.step)
    }

    pub fn failures(&self) -> usize {
        self.pairs.iter().filter(|p| !p.pass).count()
    }

    pub fn all_pass(&self) -> bool {
        self.pairs.iter().all(|p| p.pass)
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(
            w,
            "k,sigma_k,delta_sigma,required_gap,r_minus_next,r_plus_curr,pass"
        )?;
        for p in &self.pairs {
            writeln!(
                w,
                "{},{},{},{},{},{},{}",
                p.step,
                fmt_real(p.sigma),
                fmt_real(p.delta_sigma),
                fmt_real(p.required_gap),
                fmt_real(p.r_minus_next),
                fmt_real(p.r_plus_curr),
                p.pass
            )?;
        }
        Ok(())
    }
}

/// Checks every adjacent pair `(k, k+1)` for overlapping shell bands.
pub fn audit_disjointness(
    schedule: &ScheduleSpec,
    ambient: &AmbientConfig,
    epsilon: f64,
) -> Result<DisjointnessAudit> {
    let rho = rho_epsilon(epsilon)?;
    let sigma = schedule.sigma();
    let scale = (ambient.normal_dim() as f64).sqrt();
    let pairs = (0..schedule.steps())
        .map(|k| {
            let curr = band_for_radius(k, sigma[k] * scale, epsilon);
            let next = band_for_radius(k + 1, sigma[k + 1] * scale, epsilon);
            PairAudit {
                step: k,
                sigma: sigma[k],
                delta_sigma: sigma[k + 1] - sigma[k],
                required_gap: (rho - 1.0) * sigma[k],
                r_minus_next: next.r_minus,
                r_plus_curr: curr.r_plus,
                pass: next.r_minus > curr.r_plus,
            }
        })
        .collect();
    Ok(DisjointnessAudit { epsilon, pairs })
}

/// Lower bound `1 − 2 exp(−2 (D − d′) ε)` on shell coverage.
pub fn coverage_floor(ambient: &AmbientConfig, epsilon: f64) -> f64 {
    1.0 - 2.0 * (-2.0 * ambient.normal_dim() as f64 * epsilon).exp()
}

/// Monte-Carlo estimate of `P(r₋ ≤ d(x_k, M₀) ≤ r₊)`.
///
/// Sample `i` uses ChaCha8 stream `i` of `seed`, so the estimate does not
/// depend on how the index range is split across workers. Only the
/// `D − d′` normal coordinates are drawn: the clean point sits at the origin
/// of `M₀` and tangential noise does not change the distance.
pub fn mc_shell_coverage(
    schedule: &ScheduleSpec,
    k: usize,
    ambient: &AmbientConfig,
    epsilon: f64,
    samples: usize,
    seed: u64,
) -> Result<f64> {
    let band = shell_band(schedule, k, ambient, epsilon)?;
    if samples == 0 {
        return Err(Error::Parameter("need at least one sample".into()));
    }
    if k == 0 {
        return Ok(1.0);
    }
    let inside = coverage_count(schedule, &band, ambient, 0..samples as u64, seed);
    Ok(inside as f64 / samples as f64)
}

/// Number of samples with index in `range` that land inside `band`.
pub fn coverage_count(
    schedule: &ScheduleSpec,
    band: &ShellBand,
    ambient: &AmbientConfig,
    range: Range<u64>,
    seed: u64,
) -> u64 {
    let sigma = schedule.sigma()[band.step];
    let mut normal = vec![0.0; ambient.normal_dim()];
    let mut inside = 0;
    for i in range {
        let mut g = rng::stream(seed, i);
        rng::fill_normal(&mut g, &mut normal);
        let dist = sigma * normal.iter().map(|z| z * z).sum::<f64>().sqrt();
        if band.contains(dist) {
            inside += 1;
        }
    }
    inside
}
