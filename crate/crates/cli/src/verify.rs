//! Numerical checks of the shell-geometry propositions.

use rand::Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use tudm::geometry::{
    audit_disjointness, coverage_floor, mc_shell_coverage, prop3_min_dt, AmbientConfig, Separation,
};
use tudm::rng;
use tudm::schedule::{fmt_real, ScheduleKind, ScheduleSpec};

use crate::error::CliError;

/// `ε` values of the equivalence check.
pub const EQUIVALENCE_EPSILONS: [f64; 3] = [0.01, 0.04, 0.1];

/// Exact `P(r₋ ≤ d(x_k, M₀) ≤ r₊)` for `k ≥ 1`: the squared distance over
/// `σ_k²` is χ² with `D − d′` degrees of freedom.
pub fn exact_shell_coverage(ambient: &AmbientConfig, epsilon: f64) -> f64 {
    let n = ambient.normal_dim() as f64;
    let chi = ChiSquared::new(n).expect("normal dimension >= 1");
    let lo = n * (1.0 - 2.0 * epsilon.sqrt());
    let hi = n * (1.0 + 2.0 * epsilon.sqrt() + 2.0 * epsilon);
    chi.cdf(hi) - chi.cdf(lo)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoverageCheck {
    pub step: usize,
    pub sigma: f64,
    pub samples: usize,
    pub coverage: f64,
    pub floor: f64,
    pub exact: f64,
    /// Whether the tail floor is informative (`> 0`) and therefore used.
    pub uses_floor: bool,
    pub tolerance: f64,
    pub pass: bool,
}

pub const COVERAGE_CSV_HEADER: &str = "k,sigma,samples,coverage,floor,exact,reference,tolerance,pass";

impl CoverageCheck {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{}",
            self.step,
            fmt_real(self.sigma),
            self.samples,
            fmt_real(self.coverage),
            fmt_real(self.floor),
            fmt_real(self.exact),
            if self.uses_floor { "floor" } else { "exact" },
            fmt_real(self.tolerance),
            self.pass
        )
    }
}

/// Monte-Carlo coverage at step `k`, judged against the tail floor when the
/// floor is positive and against the exact χ² probability otherwise
/// (tolerance `max(0.01, 4·SE)`).
pub fn coverage_check(
    schedule: &ScheduleSpec,
    k: usize,
    ambient: &AmbientConfig,
    epsilon: f64,
    samples: usize,
    seed: u64,
) -> Result<CoverageCheck, CliError> {
    let coverage = mc_shell_coverage(schedule, k, ambient, epsilon, samples, seed)?;
    let floor = coverage_floor(ambient, epsilon);
    let exact = exact_shell_coverage(ambient, epsilon);
    let uses_floor = floor > 0.0;
    let se = (exact * (1.0 - exact) / samples as f64).sqrt();
    let tolerance = if uses_floor { 0.0 } else { (4.0 * se).max(0.01) };
    let pass = if k == 0 {
        coverage == 1.0
    } else if uses_floor {
        coverage >= floor
    } else {
        (coverage - exact).abs() <= tolerance
    };
    Ok(CoverageCheck {
        step: k,
        sigma: schedule.sigma()[k],
        samples,
        coverage,
        floor,
        exact,
        uses_floor,
        tolerance,
        pass,
    })
}

/// Steps `1, ⌈T/4⌉, ⌈T/2⌉, ⌈3T/4⌉, T` without duplicates.
pub fn coverage_steps(steps: usize) -> Vec<usize> {
    let mut ks: Vec<usize> = [1, steps.div_ceil(4), steps.div_ceil(2), (3 * steps).div_ceil(4), steps]
        .into_iter()
        .filter(|&k| k >= 1)
        .collect();
    ks.dedup();
    ks
}

/// Random non-decreasing σ sequence: `σ₀ = 0`, `σ₁ ~ U(0.001, 1)`, then
/// ratios `σ_{k+1}/σ_k ~ U(1, 2)`; length between 3 and 50.
pub fn random_sigma_sequence<R: Rng + ?Sized>(g: &mut R) -> Vec<f64> {
    let len = g.random_range(3..=50);
    let mut sigma = vec![0.0, g.random_range(0.001..1.0)];
    while sigma.len() < len {
        let last = *sigma.last().unwrap();
        sigma.push(last * g.random_range(1.0..2.0));
    }
    sigma
}

#[derive(Debug, Clone, PartialEq)]
pub struct Agreement {
    pub forms: Vec<Separation>,
    pub pairs: usize,
    pub disagreements: usize,
    /// First disagreeing pair: `(ε, σ_k, σ_{k+1}, verdict per form)`.
    pub first_disagreement: Option<(f64, f64, f64, Vec<bool>)>,
}

impl Agreement {
    pub fn all_agree(&self) -> bool {
        self.disagreements == 0
    }
}

/// Checks that every formulation in `forms` gives the same verdict on every
/// adjacent pair of `sequences` random σ sequences, for each `ε`.
pub fn separation_agreement(
    forms: &[Separation],
    sequences: usize,
    epsilons: &[f64],
    ambient: &AmbientConfig,
    seed: u64,
) -> Result<Agreement, CliError> {
    let mut g = rng::seeded(seed);
    let mut out = Agreement {
        forms: forms.to_vec(),
        pairs: 0,
        disagreements: 0,
        first_disagreement: None,
    };
    for _ in 0..sequences {
        let sigma = random_sigma_sequence(&mut g);
        for &eps in epsilons {
            for w in sigma.windows(2) {
                let verdicts = forms
                    .iter()
                    .map(|f| f.holds(w[0], w[1], eps, ambient))
                    .collect::<Result<Vec<_>, _>>()?;
                out.pairs += 1;
                if verdicts.iter().any(|&v| v != verdicts[0]) {
                    out.disagreements += 1;
                    out.first_disagreement
                        .get_or_insert((eps, w[0], w[1], verdicts));
                }
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepScan {
    pub min_dt: f64,
    /// `(T, all pairs separated)` for every scanned `T`.
    pub results: Vec<(usize, bool)>,
}

impl StepScan {
    /// Every grid with `1/T ≥ min_dt` has no mixing pair.
    pub fn sufficient(&self) -> bool {
        self.results
            .iter()
            .filter(|(t, _)| 1.0 / *t as f64 >= self.min_dt)
            .all(|(_, pass)| *pass)
    }

    /// Some grid finer than `min_dt` does mix, so the bound is not vacuous.
    pub fn tight(&self) -> bool {
        self.results
            .iter()
            .any(|(t, pass)| (1.0 / *t as f64) < self.min_dt && !pass)
    }

    pub fn first_failure(&self) -> Option<usize> {
        self.results.iter().find(|(_, p)| !p).map(|(t, _)| *t)
    }
}

/// Audits the late-expansion schedule on every grid `T = 1 … max_steps`.
pub fn late_expansion_scan(
    max_steps: usize,
    ambient: &AmbientConfig,
    epsilon: f64,
) -> Result<StepScan, CliError> {
    let min_dt = prop3_min_dt(epsilon)?;
    let results = (1..=max_steps)
        .map(|t| {
            let s = ScheduleSpec::new(ScheduleKind::LateExpansionVp, t)?;
            Ok((t, audit_disjointness(&s, ambient, epsilon)?.all_pass()))
        })
        .collect::<Result<Vec<_>, tudm::Error>>()?;
    Ok(StepScan { min_dt, results })
}
