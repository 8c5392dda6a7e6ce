use ndarray::Array2;
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

use tudm::dataset::{embed, swiss_roll};
use tudm::diffusion::forward_plain;
use tudm::eval::mean_manifold_distance;
use tudm::geometry::{coverage_floor, mc_shell_coverage, AmbientConfig};
use tudm::model::DenoiserModel;
use tudm::rng;
use tudm::schedule::{ScheduleKind, ScheduleSpec};
use tudm::SampleBatch;

#[test]
fn one_normal_dimension_matches_gaussian_closed_form() {
    let s = ScheduleSpec::new(ScheduleKind::UniformRadialVp, 100).unwrap();
    let a = AmbientConfig::new(3, 2).unwrap();
    let eps: f64 = 0.04;
    let phi = Normal::new(0.0, 1.0).unwrap();
    let lo = (1.0 - 2.0 * eps.sqrt()).sqrt();
    let hi = (1.0 + 2.0 * eps.sqrt() + 2.0 * eps).sqrt();
    let exact = 2.0 * (phi.cdf(hi) - phi.cdf(lo));
    assert!((exact - 0.214_803_5).abs() < 1e-6);
    for k in [1, 50, 100] {
        let cov = mc_shell_coverage(&s, k, &a, eps, 100_000, 9).unwrap();
        assert!((cov - exact).abs() < 0.01, "k={k}: {cov} vs {exact}");
    }
}

#[test]
fn coverage_tracks_chi_square_probability() {
    let s = ScheduleSpec::new(ScheduleKind::LateExpansionVp, 10).unwrap();
    for (dim, eps) in [(10usize, 0.05f64), (34, 0.02), (130, 0.01)] {
        let a = AmbientConfig::new(dim, 2).unwrap();
        let n = a.normal_dim() as f64;
        let chi = ChiSquared::new(n).unwrap();
        let exact = chi.cdf(n * (1.0 + 2.0 * eps.sqrt() + 2.0 * eps)) - chi.cdf(n * (1.0 - 2.0 * eps.sqrt()));
        let cov = mc_shell_coverage(&s, 5, &a, eps, 40_000, 4).unwrap();
        let se = (exact * (1.0 - exact) / 40_000.0).sqrt();
        assert!((cov - exact).abs() < 5.0 * se, "D={dim}: {cov} vs {exact}");
    }
}

#[test]
fn high_dimension_meets_floor() {
    let s = ScheduleSpec::new(ScheduleKind::UniformRadialVp, 100).unwrap();
    let a = AmbientConfig::new(1024, 2).unwrap();
    let floor = coverage_floor(&a, 0.01);
    assert!(floor > 0.999_999_99);
    for k in [1, 50, 100] {
        assert_eq!(mc_shell_coverage(&s, k, &a, 0.01, 10_000, 3).unwrap(), 1.0);
    }
}

#[test]
fn forward_batches_concentrate_on_the_shell() {
    let clean = embed(&swiss_roll(400, 0.01, 0).unwrap(), 1024).unwrap();
    let s = ScheduleSpec::new(ScheduleKind::UniformRadialVp, 100).unwrap();
    let mut g = rng::seeded(1);
    let mut z = ndarray::Array1::zeros(1024);
    let k = 40;
    let mut noisy = Array2::zeros((clean.len(), 1024));
    for (i, row) in clean.data().rows().into_iter().enumerate() {
        rng::fill_normal(&mut g, z.as_slice_mut().unwrap());
        noisy.row_mut(i).assign(&forward_plain(row, k, &s, z.view()).unwrap());
    }
    let mean = mean_manifold_distance(&SampleBatch::new(noisy, None).unwrap(), 2).unwrap();
    let r = s.sigma()[k] * 1022f64.sqrt();
    assert!((mean - r).abs() / r < 0.01, "{mean} vs {r}");
}

/// Central differences on a subset of every parameter block of the default
/// layer shapes (with a small ambient width).
#[test]
fn gradients_match_finite_differences_on_default_shapes() {
    let mut model = DenoiserModel::init(&[6, 256, 256, 256, 6], 2).unwrap();
    let mut g = rng::seeded(3);
    for l in model.layers_mut() {
        rng::fill_normal(&mut g, l.bias.as_slice_mut().unwrap());
        l.bias *= 0.1;
    }
    let mut x = Array2::zeros((5, 6));
    let mut t = Array2::zeros((5, 6));
    rng::fill_normal(&mut g, x.as_slice_mut().unwrap());
    rng::fill_normal(&mut g, t.as_slice_mut().unwrap());
    let (_, grad) = model.loss_and_grad(x.view(), t.view()).unwrap();
    let loss = |m: &DenoiserModel| m.loss_and_grad(x.view(), t.view()).unwrap().0;
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for li in 0..model.layers().len() {
        for bias in [false, true] {
            let len = if bias { model.layers()[li].bias.len() } else { model.layers()[li].weight.len() };
            for p in (0..len).step_by((len / 24).max(1)) {
                let shifted = |by: f64| {
                    let mut m = model.clone();
                    let l = &mut m.layers_mut()[li];
                    let params = if bias { l.bias.as_slice_mut().unwrap() } else { l.weight.as_slice_mut().unwrap() };
                    params[p] += by;
                    m
                };
                let numeric = (loss(&shifted(h)) - loss(&shifted(-h))) / (2.0 * h);
                let gl = &grad.layers[li];
                let analytic = if bias { gl.bias.as_slice().unwrap()[p] } else { gl.weight.as_slice().unwrap()[p] };
                let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6);
                worst = worst.max(rel);
            }
        }
    }
    assert!(worst < 1e-4, "max relative error {worst}");
}
