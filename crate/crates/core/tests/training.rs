use ndarray::{Array1, Array2, ArrayView2};

use tudm::dataset::{embed, swiss_roll};
use tudm::diffusion::{sample, ClassChoice, NoisePredictor, OrthoTimeConfig, SampleOptions};
use tudm::model::{train, TrainConfig};
use tudm::{AmbientConfig, SampleBatch, ScheduleKind, ScheduleSpec};

#[test]
fn swiss_roll_loss_decreases() {
    let a = AmbientConfig::new(2, 1).unwrap();
    let data = swiss_roll(2048, 0.01, 0).unwrap();
    let cfg = TrainConfig::new(ScheduleSpec::new(ScheduleKind::UniformRadialVp, 100).unwrap(), a);
    let out = train(&cfg, &data).unwrap();
    assert_eq!(out.loss_history.len(), 200);
    assert!(out.loss_history.iter().all(|l| l.is_finite()));
    assert!(out.loss_history[199] < out.loss_history[0]);
}

#[test]
fn training_is_deterministic() {
    let a = AmbientConfig::new(8, 2).unwrap();
    let data = embed(&swiss_roll(256, 0.01, 1).unwrap(), 8).unwrap();
    let mut cfg = TrainConfig::new(ScheduleSpec::new(ScheduleKind::LateExpansionVp, 20).unwrap(), a);
    cfg.hidden = vec![16, 16];
    cfg.epochs = 5;
    cfg.batch_size = 64;
    cfg.ortho = Some(OrthoTimeConfig::axis(&a, 0.3).unwrap());
    let first = train(&cfg, &data).unwrap();
    let second = train(&cfg, &data).unwrap();
    assert_eq!(first.model, second.model);
    assert_eq!(first.loss_history, second.loss_history);
    cfg.seed = 1;
    assert_ne!(train(&cfg, &data).unwrap().model, first.model);
}

const POINT: [f64; 2] = [0.5, -0.25];

fn one_point(dim: usize) -> (SampleBatch, Array1<f64>) {
    let mut data = Array2::zeros((1024, dim));
    data.column_mut(0).fill(POINT[0]);
    data.column_mut(1).fill(POINT[1]);
    let x0 = data.row(0).to_owned();
    (SampleBatch::new(data, None).unwrap(), x0)
}

/// Sorted per-sample distances to `x0`.
fn distances(samples: &SampleBatch, x0: &Array1<f64>) -> Vec<f64> {
    let mut d: Vec<f64> = samples
        .data()
        .rows()
        .into_iter()
        .map(|r| (&r - x0).dot(&(&r - x0)).sqrt())
        .collect();
    d.sort_by(f64::total_cmp);
    d
}

/// Best possible time-unconditional predictor for a one-point dataset: the
/// true noise averaged over the posterior of the step given `x`.
struct PosteriorMean {
    x0: Array1<f64>,
    schedule: ScheduleSpec,
}

impl NoisePredictor for PosteriorMean {
    fn width(&self) -> usize {
        self.x0.len()
    }

    fn predict_batch(&self, x: ArrayView2<'_, f64>) -> Array2<f64> {
        let dim = self.x0.len() as f64;
        let (c, sigma) = (self.schedule.c(), self.schedule.sigma());
        let mut out = Array2::zeros(x.raw_dim());
        for (row, mut o) in x.rows().into_iter().zip(out.rows_mut()) {
            let resid: Vec<Array1<f64>> = (1..=self.schedule.steps()).map(|k| &row - &(&self.x0 * c[k])).collect();
            let logw: Vec<f64> = resid
                .iter()
                .enumerate()
                .map(|(i, r)| -r.dot(r) / (2.0 * sigma[i + 1].powi(2)) - dim * sigma[i + 1].ln())
                .collect();
            let top = logw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let w: Vec<f64> = logw.iter().map(|l| (l - top).exp()).collect();
            let total: f64 = w.iter().sum();
            for (i, r) in resid.iter().enumerate() {
                o.scaled_add(w[i] / (total * sigma[i + 1]), r);
            }
        }
        out
    }
}

/// Even the optimal time-unconditional predictor leaves samples whose noise
/// norm is atypical far from the point, so "every sample within 0.1" cannot
/// hold for any trained model.
#[test]
fn posterior_mean_predictor_leaves_outliers() {
    for dim in [8, 32] {
        let (_, x0) = one_point(dim);
        let schedule = ScheduleSpec::new(ScheduleKind::conventional(), 100).unwrap();
        let oracle = PosteriorMean { x0: x0.clone(), schedule: schedule.clone() };
        let samples = sample(&oracle, &schedule, None, 64, 7, ClassChoice::Auto, SampleOptions::default()).unwrap();
        let d = distances(&samples, &x0);
        assert!(d[32] < 0.1, "D={dim}: median {}", d[32]);
        assert!(d[63] > 0.5, "D={dim}: max {}", d[63]);
    }
}

#[test]
fn one_point_dataset_is_mostly_recovered_by_sampling() {
    let (data, x0) = one_point(8);
    let schedule = ScheduleSpec::new(ScheduleKind::conventional(), 100).unwrap();
    let mut cfg = TrainConfig::new(schedule.clone(), AmbientConfig::new(8, 2).unwrap());
    cfg.hidden = vec![64, 64];
    cfg.epochs = 1600;
    cfg.batch_size = 256;
    let out = train(&cfg, &data).unwrap();
    let samples = sample(&out.model, &schedule, None, 64, 7, ClassChoice::Auto, SampleOptions::default()).unwrap();
    let d = distances(&samples, &x0);
    // initial draws sit about 0.8·√8 ≈ 2.3 away
    assert!(d[32] < 0.25, "median distance {}", d[32]);
}

/// Literal form of the one-point example; see `posterior_mean_predictor_leaves_outliers`.
#[test]
#[ignore = "unattainable for a time-unconditional predictor"]
fn one_point_dataset_is_recovered_by_sampling() {
    let (data, x0) = one_point(8);
    let schedule = ScheduleSpec::new(ScheduleKind::conventional(), 100).unwrap();
    let mut cfg = TrainConfig::new(schedule.clone(), AmbientConfig::new(8, 2).unwrap());
    cfg.hidden = vec![64, 64];
    cfg.epochs = 1600;
    cfg.batch_size = 256;
    let out = train(&cfg, &data).unwrap();
    let samples = sample(&out.model, &schedule, None, 64, 7, ClassChoice::Auto, SampleOptions::default()).unwrap();
    let d = distances(&samples, &x0);
    assert!(d[63] < 0.1, "max distance {}", d[63]);
}
