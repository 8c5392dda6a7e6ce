//! Subcommand implementations. Each returns an [`Outcome`]; `main` prints
//! the summary and exits with the code.

use std::fmt::Write as _;
use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use tudm::checkpoint::Checkpoint;
use tudm::dataset::{distance_to_m0, SampleBatch};
use tudm::diffusion::{sample_with_observer, ClassChoice};
use tudm::eval::{EvalReport, REPORT_CSV_HEADER};
use tudm::geometry::{audit_disjointness, prop3_min_dt, AmbientConfig, Separation};
use tudm::schedule::fmt_real;

use crate::config::RunConfig;
use crate::error::{exit, CliError};
use crate::experiment::{
    self, average_reports, derive_seed, evaluate_batches, generate, reference_data, train_run, Purpose,
};
use crate::rundir::RunDir;
use crate::verify::{self, COVERAGE_CSV_HEADER, EQUIVALENCE_EPSILONS};

pub const CHECKPOINT_FILE: &str = "model.tudm";

#[derive(Debug, Clone)]
pub struct Outcome {
    pub code: i32,
    pub run_dir: PathBuf,
    /// `key=value` lines for stdout.
    pub summary: String,
}

fn finish(run: &RunDir, cfg: &RunConfig, command: &str, code: i32, summary: String) -> Result<Outcome, CliError> {
    run.write(&format!("{command}.config.txt"), cfg.values.dump().as_bytes())?;
    run.write_manifest()?;
    Ok(Outcome {
        code,
        run_dir: run.path().to_path_buf(),
        summary,
    })
}

fn batch_csv(batch: &SampleBatch) -> Result<Vec<u8>, CliError> {
    let mut buf = Vec::new();
    batch.write_csv(&mut buf)?;
    Ok(buf)
}

pub fn schedule_analyze(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let schedule = cfg.schedule()?;
    let ambient = cfg.ambient()?;
    let audit = audit_disjointness(&schedule, &ambient, cfg.epsilon)?;
    let run = RunDir::create(cfg.run_dir())?;

    let mut sched_csv = Vec::new();
    schedule.write_csv(&mut sched_csv)?;
    run.write("schedule.csv", &sched_csv)?;
    let mut audit_csv = Vec::new();
    audit.write_csv(&mut audit_csv)?;
    run.write("audit.csv", &audit_csv)?;

    let mixing = !audit.all_pass();
    let mut s = String::new();
    let _ = writeln!(s, "schedule={}", schedule.kind());
    let _ = writeln!(s, "steps={}", schedule.steps());
    let _ = writeln!(s, "epsilon={}", cfg.epsilon);
    let _ = writeln!(s, "prop3_min_dt={}", fmt_real(prop3_min_dt(cfg.epsilon)?));
    let _ = writeln!(s, "pairs={}", audit.pairs.len());
    let _ = writeln!(s, "mixing_pairs={}", audit.failures());
    if let (Some(first), Some(last)) = (audit.first_failure(), audit.last_failure()) {
        let _ = writeln!(s, "first_mixing_k={first}");
        let _ = writeln!(s, "last_mixing_k={last}");
    }
    let _ = writeln!(s, "status={}", if mixing { "mixing" } else { "separated" });
    let code = if mixing { exit::MIXING } else { exit::SUCCESS };
    finish(&run, cfg, "schedule-analyze", code, s)
}

pub fn verify_props(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let ambient = AmbientConfig::new(cfg.verify_ambient_dim, cfg.verify_intrinsic_dim)?;
    let schedule = cfg.schedule()?;
    if cfg.verify_samples == 0 {
        return Err(CliError::Config("`verify.samples` must be >= 1".into()));
    }
    let run = RunDir::create(cfg.run_dir())?;
    let mut report = String::new();
    let mut all = true;
    let mut record = |report: &mut String, name: &str, pass: bool, detail: String| {
        all &= pass;
        let _ = writeln!(report, "check.{name}={}", if pass { "pass" } else { "fail" });
        if !detail.is_empty() {
            let _ = writeln!(report, "detail.{name}={detail}");
        }
    };

    let mut cov_csv = format!("{COVERAGE_CSV_HEADER}\n");
    for k in verify::coverage_steps(schedule.steps()) {
        let c = verify::coverage_check(&schedule, k, &ambient, cfg.epsilon, cfg.verify_samples, cfg.seed)?;
        cov_csv.push_str(&c.csv_row());
        cov_csv.push('\n');
        let reference = if c.uses_floor {
            format!("floor {}", fmt_real(c.floor))
        } else {
            format!("exact {} ± {}", fmt_real(c.exact), fmt_real(c.tolerance))
        };
        record(
            &mut report,
            &format!("coverage_k{k}"),
            c.pass,
            format!("coverage {} vs {reference}", fmt_real(c.coverage)),
        );
    }
    run.write("coverage.csv", cov_csv.as_bytes())?;

    let stated = verify::separation_agreement(
        &[Separation::Radius, Separation::Increment, Separation::Ratio],
        cfg.verify_sequences,
        &EQUIVALENCE_EPSILONS,
        &ambient,
        cfg.seed,
    )?;
    record(&mut report, "prop2_equivalence", stated.all_agree(), agreement_detail(&stated));
    let exact = verify::separation_agreement(
        &[Separation::Radius, Separation::Ratio, Separation::Gap],
        cfg.verify_sequences,
        &EQUIVALENCE_EPSILONS,
        &ambient,
        cfg.seed,
    )?;
    record(&mut report, "prop2_radius_ratio_gap", exact.all_agree(), agreement_detail(&exact));

    let scan = verify::late_expansion_scan(cfg.verify_max_steps, &ambient, cfg.epsilon)?;
    let largest_separated = scan
        .results
        .iter()
        .filter(|(_, p)| *p)
        .map(|(t, _)| *t)
        .max()
        .unwrap_or(0);
    record(
        &mut report,
        "prop3_sufficient",
        scan.sufficient(),
        format!("min_dt {}; largest separated T {largest_separated}", fmt_real(scan.min_dt)),
    );
    record(
        &mut report,
        "prop3_tight",
        scan.tight(),
        format!(
            "first mixing T {}",
            scan.first_failure().map_or("none".into(), |t| t.to_string())
        ),
    );
    let _ = writeln!(report, "all_pass={all}");
    run.write("verify.txt", report.as_bytes())?;
    finish(&run, cfg, "verify-props", exit::SUCCESS, report)
}

fn agreement_detail(a: &verify::Agreement) -> String {
    let names: Vec<_> = a.forms.iter().map(|f| format!("{f:?}").to_lowercase()).collect();
    let mut d = format!("{} of {} pairs disagree among {}", a.disagreements, a.pairs, names.join("/"));
    if let Some((eps, s0, s1, v)) = &a.first_disagreement {
        let _ = write!(d, "; first at eps {eps} sigma {} -> {} verdicts {v:?}", fmt_real(*s0), fmt_real(*s1));
    }
    d
}

pub fn train(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let spacing = cfg.ortho.then_some(cfg.ortho_spacing);
    let trained = train_run(cfg, cfg.seed, spacing)?;
    let run = RunDir::create(cfg.run_dir())?;

    let mut ck = Vec::new();
    trained.checkpoint.write_to(&mut ck)?;
    let ck_path = run.write(CHECKPOINT_FILE, &ck)?;
    let mut loss = String::from("epoch,loss\n");
    for (e, l) in trained.loss_history.iter().enumerate() {
        let _ = writeln!(loss, "{e},{}", fmt_real(*l));
    }
    run.write("loss.csv", loss.as_bytes())?;
    run.write("reference.csv", &batch_csv(&reference_data(cfg, cfg.seed)?)?)?;

    let mut s = String::new();
    let _ = writeln!(s, "checkpoint={}", ck_path.display());
    let _ = writeln!(s, "parameters={}", trained.checkpoint.model.parameter_count());
    if let (Some(first), Some(last)) = (trained.loss_history.first(), trained.loss_history.last()) {
        let _ = writeln!(s, "first_epoch_loss={}", fmt_real(*first));
        let _ = writeln!(s, "final_epoch_loss={}", fmt_real(*last));
    }
    if let Some(o) = &trained.checkpoint.ortho {
        let _ = writeln!(s, "delta={}", fmt_real(o.delta()));
        let _ = writeln!(s, "class_directions={}", o.num_classes());
    }
    finish(&run, cfg, "train", exit::SUCCESS, s)
}

pub fn read_checkpoint(path: &Path) -> Result<Checkpoint, CliError> {
    let f = fs::File::open(path).map_err(|e| CliError::io(path, e))?;
    Checkpoint::read_from(BufReader::new(f)).map_err(|e| CliError::artifact(path, e))
}

pub fn read_batch(path: &Path) -> Result<SampleBatch, CliError> {
    let f = fs::File::open(path).map_err(|e| CliError::io(path, e))?;
    SampleBatch::read_csv(BufReader::new(f)).map_err(|e| CliError::artifact(path, e))
}

pub fn sample(cfg: &RunConfig, checkpoint_path: &Path) -> Result<Outcome, CliError> {
    let ck = read_checkpoint(checkpoint_path)?;
    if let (ClassChoice::Fixed(c), Some(o)) = (cfg.class_choice, &ck.ortho) {
        if c >= o.num_classes() {
            return Err(CliError::Config(format!(
                "`sample.class_id` {c} out of range: checkpoint has {} class directions",
                o.num_classes()
            )));
        }
    }
    let run = RunDir::create(cfg.run_dir())?;
    let generated = if cfg.trajectory {
        let (batch, csv) = sample_with_trajectory(cfg, &ck)?;
        run.write("trajectory.csv", csv.as_bytes())?;
        batch
    } else {
        generate(cfg, &ck, cfg.seed)?
    };
    let path = run.write("samples.csv", &batch_csv(&generated)?)?;
    let mut s = String::new();
    let _ = writeln!(s, "samples={}", path.display());
    let _ = writeln!(s, "count={}", generated.len());
    finish(&run, cfg, "sample", exit::SUCCESS, s)
}

/// Samples while recording, per step, the mean distance to `M₀` and (for
/// orthogonal checkpoints) the largest deviation from the step hyperplane.
fn sample_with_trajectory(cfg: &RunConfig, ck: &Checkpoint) -> Result<(SampleBatch, String), CliError> {
    let d = ck.ambient.intrinsic_dim();
    let n = cfg.sample_count;
    let ortho = ck.ortho.as_ref();
    let class_of = |i: usize| match (cfg.class_choice, ortho) {
        (ClassChoice::Fixed(c), _) => Some(c),
        (ClassChoice::Auto, Some(o)) if o.num_classes() > 0 => Some(i % o.num_classes()),
        _ => None,
    };
    let mut csv = String::from(if ortho.is_some() {
        "k,t,mean_manifold_distance,max_hyperplane_offset\n"
    } else {
        "k,t,mean_manifold_distance\n"
    });
    let mut failure = None;
    let batch = sample_with_observer(
        &ck.model,
        &ck.schedule,
        ortho,
        n,
        derive_seed(cfg.seed, Purpose::Sampling),
        cfg.class_choice,
        experiment::sample_options(cfg),
        |k, x| {
            let t = ck.schedule.grid()[k];
            let mean = if n == 0 {
                0.0
            } else {
                x.rows().into_iter().map(|r| distance_to_m0(r, d)).sum::<f64>() / n as f64
            };
            let _ = write!(csv, "{k},{},{}", fmt_real(t), fmt_real(mean));
            if let Some(o) = ortho {
                let mut worst = 0.0f64;
                for (i, row) in x.rows().into_iter().enumerate() {
                    match o.time_axis(class_of(i)) {
                        Ok(a) => worst = worst.max((row.dot(&a.direction) - t * a.delta).abs()),
                        Err(e) => failure = Some(e),
                    }
                }
                let _ = write!(csv, ",{}", fmt_real(worst));
            }
            csv.push('\n');
        },
    )?;
    if let Some(e) = failure {
        return Err(e.into());
    }
    Ok((batch, csv))
}

pub fn eval(cfg: &RunConfig, generated: &Path, reference: &Path) -> Result<Outcome, CliError> {
    let gen = read_batch(generated)?;
    let reference = read_batch(reference)?;
    if gen.dim() != reference.dim() {
        return Err(CliError::Config(format!(
            "dimension mismatch: generated has D={}, reference has D={}",
            gen.dim(),
            reference.dim()
        )));
    }
    let report = evaluate_batches(cfg, &gen, &reference, cfg.seed)?;
    let run = RunDir::create(cfg.run_dir())?;
    run.write("report.txt", report.to_key_value().as_bytes())?;
    run.write("report.csv", format!("{REPORT_CSV_HEADER}\n{}\n", report.csv_row()).as_bytes())?;
    finish(&run, cfg, "eval", exit::SUCCESS, report.to_key_value())
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub spacing: f64,
    pub delta: f64,
    pub seed: u64,
    pub replicates: usize,
    pub report: EvalReport,
}

pub const SWEEP_CSV_HEADER: &str =
    "spacing,delta,seed,replicates,mean_manifold_distance,median_manifold_distance,sliced_distance";

impl SweepRow {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{}",
            fmt_real(self.spacing),
            fmt_real(self.delta),
            self.seed,
            self.replicates,
            fmt_real(self.report.mean_manifold_distance),
            fmt_real(self.report.median_manifold_distance),
            fmt_real(self.report.sliced_distance)
        )
    }
}

/// Sorted spacings with duplicates removed; returns the removed values.
pub fn normalize_spacings(spacings: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let mut sorted = spacings.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut unique: Vec<f64> = Vec::with_capacity(sorted.len());
    let mut dropped = Vec::new();
    for s in sorted {
        if unique.last() == Some(&s) {
            dropped.push(s);
        } else {
            unique.push(s);
        }
    }
    (unique, dropped)
}

/// Trains and evaluates the orthogonal variant once per spacing and
/// replicate seed (`seed`, `seed+1`, …); rows are ascending in spacing.
pub fn run_sweep(cfg: &RunConfig, run: Option<&RunDir>) -> Result<Vec<SweepRow>, CliError> {
    let (spacings, dropped) = normalize_spacings(&cfg.sweep_spacings);
    if spacings.is_empty() {
        return Err(CliError::Config("`sweep.spacings` is empty".into()));
    }
    if !dropped.is_empty() {
        log::warn!("duplicate spacings ignored: {dropped:?}");
    }
    let mut rows = Vec::with_capacity(spacings.len());
    for &spacing in &spacings {
        let mut reports = Vec::with_capacity(cfg.sweep_replicates);
        for r in 0..cfg.sweep_replicates as u64 {
            let seed = cfg.seed.wrapping_add(r);
            let (_, report) = experiment::train_and_evaluate(cfg, seed, Some(spacing))?;
            log::info!("spacing {spacing} seed {seed}: sliced {:.6}", report.sliced_distance);
            if let Some(run) = run {
                run.write(
                    &format!("cells/spacing{spacing}-seed{seed}.txt"),
                    report.to_key_value().as_bytes(),
                )?;
            }
            reports.push(report);
        }
        rows.push(SweepRow {
            spacing,
            delta: cfg.delta_for(spacing)?,
            seed: cfg.seed,
            replicates: cfg.sweep_replicates,
            report: average_reports(&reports),
        });
    }
    Ok(rows)
}

pub fn sweep_delta(cfg: &RunConfig) -> Result<Outcome, CliError> {
    if cfg.sweep_spacings.is_empty() {
        return Err(CliError::Config("`sweep.spacings` is empty".into()));
    }
    let run = RunDir::create(cfg.run_dir())?;
    let rows = run_sweep(cfg, Some(&run))?;
    let mut csv = format!("{SWEEP_CSV_HEADER}\n");
    for r in &rows {
        csv.push_str(&r.csv_row());
        csv.push('\n');
    }
    let path = run.write("sweep.csv", csv.as_bytes())?;
    let summary = format!("sweep={}\nrows={}\n", path.display(), rows.len());
    finish(&run, cfg, "sweep-delta", exit::SUCCESS, summary)
}
