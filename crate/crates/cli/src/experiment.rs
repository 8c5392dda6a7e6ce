//! Data → train → sample → evaluate pipeline shared by the subcommands.

use tudm::checkpoint::Checkpoint;
use tudm::dataset::{embed, gaussian_mixture, ring_centers, swiss_roll, SampleBatch};
use tudm::diffusion::{sample, OrthoTimeConfig, SampleOptions};
use tudm::eval::{evaluate, EvalReport};
use tudm::model::train_with_progress;

use crate::config::{DatasetKind, DirectionMode, RunConfig};
use crate::error::CliError;

/// Independent sub-seeds derived from the master seed, one per purpose.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Purpose {
    TrainData = 1,
    Reference = 2,
    Training = 3,
    Sampling = 4,
    Projections = 5,
}

/// SplitMix64 finaliser over `seed` and the purpose tag.
pub fn derive_seed(seed: u64, purpose: Purpose) -> u64 {
    let mut z = seed ^ (purpose as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// `n` clean points of the configured dataset, embedded into `D`.
pub fn clean_data(cfg: &RunConfig, n: usize, seed: u64) -> Result<SampleBatch, CliError> {
    let flat = match cfg.dataset {
        DatasetKind::SwissRoll => swiss_roll(n, cfg.swiss_roll_noise, seed)?,
        DatasetKind::GaussianMixture => gaussian_mixture(
            n,
            &ring_centers(cfg.mixture_components, cfg.mixture_radius),
            cfg.mixture_scale,
            seed,
        )?,
    };
    Ok(embed(&flat, cfg.ambient_dim)?)
}

/// The orthogonal configuration for time spacing `spacing`, or `None` for
/// the plain variant.
pub fn ortho_config(
    cfg: &RunConfig,
    spacing: Option<f64>,
    clean: &SampleBatch,
) -> Result<Option<OrthoTimeConfig>, CliError> {
    let Some(spacing) = spacing else {
        return Ok(None);
    };
    let ambient = cfg.ambient()?;
    let delta = cfg.delta_for(spacing)?;
    let o = if cfg.conditional {
        OrthoTimeConfig::class_axes(&ambient, delta, cfg.mixture_components)?
    } else {
        match cfg.ortho_direction {
            DirectionMode::Axis => OrthoTimeConfig::axis(&ambient, delta)?,
            DirectionMode::LeastVariance => OrthoTimeConfig::least_variance(clean, &ambient, delta)?,
        }
    };
    Ok(Some(o))
}

#[derive(Debug, Clone)]
pub struct TrainedRun {
    pub checkpoint: Checkpoint,
    pub loss_history: Vec<f64>,
}

/// Generates training data from `seed` and trains one model. `spacing` is
/// `None` for the plain variant.
pub fn train_run(cfg: &RunConfig, seed: u64, spacing: Option<f64>) -> Result<TrainedRun, CliError> {
    let data = clean_data(cfg, cfg.n_train, derive_seed(seed, Purpose::TrainData))?;
    let ortho = ortho_config(cfg, spacing, &data)?;
    let train_cfg = cfg.train_config(ortho.clone(), derive_seed(seed, Purpose::Training))?;
    let label = format!("{}-seed{seed}", cfg.run_label);
    let outcome = train_with_progress(&train_cfg, &data, |epoch, loss| {
        if epoch % 20 == 0 || epoch + 1 == cfg.epochs {
            log::info!("{label}: epoch {epoch} loss {loss:.6}");
        }
    })?;
    Ok(TrainedRun {
        checkpoint: Checkpoint {
            ambient: cfg.ambient()?,
            schedule: train_cfg.schedule,
            ortho,
            model: outcome.model,
        },
        loss_history: outcome.loss_history,
    })
}

pub fn sample_options(cfg: &RunConfig) -> SampleOptions {
    SampleOptions {
        project_eps: cfg.project_eps,
    }
}

/// `cfg.sample_count` generated rows from `checkpoint`.
pub fn generate(cfg: &RunConfig, checkpoint: &Checkpoint, seed: u64) -> Result<SampleBatch, CliError> {
    Ok(sample(
        &checkpoint.model,
        &checkpoint.schedule,
        checkpoint.ortho.as_ref(),
        cfg.sample_count,
        derive_seed(seed, Purpose::Sampling),
        cfg.class_choice,
        sample_options(cfg),
    )?)
}

/// Clean held-out reference samples.
pub fn reference_data(cfg: &RunConfig, seed: u64) -> Result<SampleBatch, CliError> {
    clean_data(cfg, cfg.eval_reference_count, derive_seed(seed, Purpose::Reference))
}

pub fn evaluate_batches(
    cfg: &RunConfig,
    generated: &SampleBatch,
    reference: &SampleBatch,
    seed: u64,
) -> Result<EvalReport, CliError> {
    Ok(evaluate(
        generated,
        reference,
        cfg.ambient()?.intrinsic_dim(),
        cfg.eval_projections,
        derive_seed(seed, Purpose::Projections),
    )?)
}

/// Train, sample, and evaluate one cell.
pub fn train_and_evaluate(
    cfg: &RunConfig,
    seed: u64,
    spacing: Option<f64>,
) -> Result<(TrainedRun, EvalReport), CliError> {
    let run = train_run(cfg, seed, spacing)?;
    let generated = generate(cfg, &run.checkpoint, seed)?;
    let reference = reference_data(cfg, seed)?;
    let report = evaluate_batches(cfg, &generated, &reference, seed)?;
    Ok((run, report))
}

/// Mean of each metric over replicate reports.
pub fn average_reports(reports: &[EvalReport]) -> EvalReport {
    let n = reports.len() as f64;
    let mean = |f: fn(&EvalReport) -> f64| reports.iter().map(f).sum::<f64>() / n;
    EvalReport {
        mean_manifold_distance: mean(|r| r.mean_manifold_distance),
        median_manifold_distance: mean(|r| r.median_manifold_distance),
        sliced_distance: mean(|r| r.sliced_distance),
        shell_coverage_by_step: None,
        n_generated: reports[0].n_generated,
        n_reference: reports[0].n_reference,
    }
}
