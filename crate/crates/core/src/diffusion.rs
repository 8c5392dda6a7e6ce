//! Forward processes and deterministic DDIM (η = 0) reverse steps, in the
//! plain unified form and in the orthogonal time-space form.
//!
//! In the orthogonal form a unit direction `t_ortho` normal to `M₀` carries
//! time: step `k` lives on the hyperplane `⟨x, t_ortho⟩ = t_k δ`, the noise
//! is projected onto `t_ortho^⊥`, and the denoiser never sees `k`.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use crate::dataset::SampleBatch;
use crate::error::{Error, Result};
use crate::geometry::AmbientConfig;
use crate::rng;
use crate::schedule::ScheduleSpec;

/// Signal coefficients below this are treated as zero by the reverse step.
pub const MIN_SIGNAL: f64 = 1e-6;

const UNIT_TOL: f64 = 1e-12;
const ORTHONORMAL_TOL: f64 = 1e-10;
const HYPERPLANE_TOL: f64 = 1e-9;

/// A time-unconditional noise predictor `x ↦ ε̂`.
pub trait NoisePredictor {
    fn width(&self) -> usize;

    /// Row-wise prediction for a batch of inputs.
    fn predict_batch(&self, x: ArrayView2<'_, f64>) -> Array2<f64>;
}

/// Time direction(s) and spacing δ for the orthogonal variant.
#[derive(Debug, Clone, PartialEq)]
pub struct OrthoTimeConfig {
    direction: Array1<f64>,
    delta: f64,
    class_directions: Option<Vec<Array1<f64>>>,
}

/// One time direction with its spacing, as used by the kernels.
#[derive(Debug, Clone, Copy)]
pub struct TimeAxis<'a> {
    pub direction: ArrayView1<'a, f64>,
    pub delta: f64,
}

impl OrthoTimeConfig {
    pub fn new(
        direction: Array1<f64>,
        delta: f64,
        class_directions: Option<Vec<Array1<f64>>>,
        intrinsic_dim: usize,
    ) -> Result<Self> {
        if !(delta >= 0.0) || !delta.is_finite() {
            return Err(Error::Parameter(format!("delta must be finite and >= 0, got {delta}")));
        }
        check_time_direction(direction.view(), intrinsic_dim)?;
        if let Some(dirs) = &class_directions {
            if dirs.is_empty() {
                return Err(Error::Parameter("class direction list is empty".into()));
            }
            for d in dirs {
                if d.len() != direction.len() {
                    return Err(Error::Dimension {
                        expected: direction.len(),
                        actual: d.len(),
                    });
                }
                check_time_direction(d.view(), intrinsic_dim)?;
            }
            for i in 0..dirs.len() {
                for j in 0..i {
                    if dirs[i].dot(&dirs[j]).abs() > ORTHONORMAL_TOL {
                        return Err(Error::Parameter(format!(
                            "class directions {j} and {i} are not orthogonal"
                        )));
                    }
                }
            }
        }
        Ok(OrthoTimeConfig {
            direction,
            delta,
            class_directions,
        })
    }

    /// `t_ortho = e_{d′+1}`, the first normal coordinate axis.
    pub fn axis(ambient: &AmbientConfig, delta: f64) -> Result<Self> {
        Self::new(
            unit_axis(ambient.ambient_dim(), ambient.intrinsic_dim()),
            delta,
            None,
            ambient.intrinsic_dim(),
        )
    }

    /// Class `i` gets `e_{d′+1+i}`; the shared direction is class 0's.
    pub fn class_axes(ambient: &AmbientConfig, delta: f64, classes: usize) -> Result<Self> {
        if classes == 0 || classes > ambient.normal_dim() {
            return Err(Error::Parameter(format!(
                "need 1..={} class directions, got {classes}",
                ambient.normal_dim()
            )));
        }
        let dirs = (0..classes)
            .map(|i| unit_axis(ambient.ambient_dim(), ambient.intrinsic_dim() + i))
            .collect();
        Self::new(
            unit_axis(ambient.ambient_dim(), ambient.intrinsic_dim()),
            delta,
            Some(dirs),
            ambient.intrinsic_dim(),
        )
    }

    /// Unit direction of least sample variance within the normal subspace of
    /// `clean`. Falls back to `e_{d′+1}` when the normal part carries no
    /// variance at all (the zero-padded case).
    pub fn least_variance(clean: &SampleBatch, ambient: &AmbientConfig, delta: f64) -> Result<Self> {
        if clean.dim() != ambient.ambient_dim() {
            return Err(Error::Dimension {
                expected: ambient.ambient_dim(),
                actual: clean.dim(),
            });
        }
        let d = ambient.intrinsic_dim();
        let m = ambient.normal_dim();
        let n = clean.len();
        if n < 2 {
            return Self::axis(ambient, delta);
        }
        let normal = clean.data().slice(ndarray::s![.., d..]).to_owned();
        let mean = normal.mean_axis(ndarray::Axis(0)).unwrap();
        let centered = &normal - &mean;
        let cov = centered.t().dot(&centered) / (n - 1) as f64;
        let mat = nalgebra::DMatrix::from_fn(m, m, |i, j| cov[[i, j]]);
        let eig = nalgebra::SymmetricEigen::new(mat);
        let max = eig.eigenvalues.iter().cloned().fold(0.0, f64::max);
        if max <= 1e-24 {
            return Self::axis(ambient, delta);
        }
        let (imin, _) = eig
            .eigenvalues
            .iter()
            .enumerate()
            .fold((0, f64::INFINITY), |acc, (i, &v)| if v < acc.1 { (i, v) } else { acc });
        let v = eig.eigenvectors.column(imin);
        // sign: largest-magnitude entry positive
        let pivot = v.iter().cloned().fold(0.0, |a: f64, b| if b.abs() > a.abs() { b } else { a });
        let sign = if pivot < 0.0 { -1.0 } else { 1.0 };
        let mut direction = Array1::zeros(ambient.ambient_dim());
        for i in 0..m {
            direction[d + i] = sign * v[i];
        }
        let norm = direction.dot(&direction).sqrt();
        direction /= norm;
        Self::new(direction, delta, None, d)
    }

    /// Default spacing `δ = spacing · √(D − d′)`.
    pub fn scaled_delta(ambient: &AmbientConfig, spacing: f64) -> f64 {
        spacing * (ambient.normal_dim() as f64).sqrt()
    }

    pub fn direction(&self) -> ArrayView1<'_, f64> {
        self.direction.view()
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn dim(&self) -> usize {
        self.direction.len()
    }

    pub fn class_directions(&self) -> Option<&[Array1<f64>]> {
        self.class_directions.as_deref()
    }

    pub fn num_classes(&self) -> usize {
        self.class_directions.as_ref().map_or(0, Vec::len)
    }

    pub fn with_delta(&self, delta: f64) -> Result<Self> {
        if !(delta >= 0.0) {
            return Err(Error::Parameter(format!("delta must be >= 0, got {delta}")));
        }
        Ok(OrthoTimeConfig {
            delta,
            ..self.clone()
        })
    }

    /// The axis used for `class`, or the shared direction for `None`.
    pub fn time_axis(&self, class: Option<usize>) -> Result<TimeAxis<'_>> {
        let direction = match class {
            None => self.direction.view(),
            Some(c) => {
                let dirs = self.class_directions.as_ref().ok_or_else(|| {
                    Error::Parameter("class id given but no class directions configured".into())
                })?;
                dirs.get(c)
                    .ok_or_else(|| {
                        Error::Parameter(format!("class id {c} out of range 0..{}", dirs.len()))
                    })?
                    .view()
            }
        };
        Ok(TimeAxis {
            direction,
            delta: self.delta,
        })
    }
}

fn unit_axis(dim: usize, index: usize) -> Array1<f64> {
    let mut e = Array1::zeros(dim);
    e[index] = 1.0;
    e
}

fn check_time_direction(direction: ArrayView1<'_, f64>, intrinsic_dim: usize) -> Result<()> {
    if intrinsic_dim >= direction.len() {
        return Err(Error::Parameter(format!(
            "time direction of length {} leaves no normal space for d'={intrinsic_dim}",
            direction.len()
        )));
    }
    let norm = direction.dot(&direction).sqrt();
    if (norm - 1.0).abs() > UNIT_TOL {
        return Err(Error::Parameter(format!("time direction has norm {norm}, expected 1")));
    }
    if direction.iter().take(intrinsic_dim).any(|v| v.abs() > UNIT_TOL) {
        return Err(Error::Parameter(
            "time direction must vanish on the clean-manifold coordinates".into(),
        ));
    }
    Ok(())
}

fn check_len(expected: usize, actual: usize) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(Error::Dimension { expected, actual })
    }
}

/// `c_k x₀ + σ_k z`
pub fn forward_plain(
    x0: ArrayView1<'_, f64>,
    k: usize,
    schedule: &ScheduleSpec,
    z: ArrayView1<'_, f64>,
) -> Result<Array1<f64>> {
    check_len(x0.len(), z.len())?;
    let (c, sigma) = schedule.coefficients(k)?;
    Ok(&x0 * c + &z * sigma)
}

/// `z − ⟨z, t⟩ t`
pub fn project_ortho(z: ArrayView1<'_, f64>, ortho: &OrthoTimeConfig) -> Result<Array1<f64>> {
    check_len(ortho.dim(), z.len())?;
    Ok(project_out(z, ortho.direction()))
}

pub fn project_out(z: ArrayView1<'_, f64>, direction: ArrayView1<'_, f64>) -> Array1<f64> {
    let along = z.dot(&direction);
    &z - &(&direction * along)
}

/// `c_k x₀ + t_k δ t_ortho + σ_k z_ortho`, with `x₀` required to lie on the
/// base hyperplane `⟨x, t_ortho⟩ = 0`.
pub fn forward_ortho(
    x0: ArrayView1<'_, f64>,
    k: usize,
    schedule: &ScheduleSpec,
    ortho: &OrthoTimeConfig,
    z: ArrayView1<'_, f64>,
) -> Result<Array1<f64>> {
    forward_on_axis(x0, k, schedule, &ortho.time_axis(None)?, z)
}

pub fn forward_on_axis(
    x0: ArrayView1<'_, f64>,
    k: usize,
    schedule: &ScheduleSpec,
    axis: &TimeAxis<'_>,
    z: ArrayView1<'_, f64>,
) -> Result<Array1<f64>> {
    check_len(axis.direction.len(), x0.len())?;
    check_len(x0.len(), z.len())?;
    let off = x0.dot(&axis.direction);
    if off.abs() > HYPERPLANE_TOL {
        return Err(Error::Contract(format!(
            "clean sample leaves the base hyperplane: <x0, t_ortho> = {off}"
        )));
    }
    let (c, sigma) = schedule.coefficients(k)?;
    let t = schedule.time(k)?;
    let z_ortho = project_out(z, axis.direction);
    Ok(&x0 * c + &(&axis.direction * (t * axis.delta)) + &z_ortho * sigma)
}

fn reverse_coefficients(schedule: &ScheduleSpec, k: usize) -> Result<(f64, f64, f64, f64)> {
    if k == 0 {
        return Err(Error::Index {
            index: 0,
            max: schedule.steps(),
        });
    }
    let (c, sigma) = schedule.coefficients(k)?;
    let (c_prev, sigma_prev) = schedule.coefficients(k - 1)?;
    Ok((c, sigma, c_prev, sigma_prev))
}

/// `x̂₀ = (x_k − σ_k ε̂) / c_k`, then `c_{k−1} x̂₀ + σ_{k−1} ε̂`.
pub fn ddim_step_plain(
    x_k: ArrayView1<'_, f64>,
    eps_hat: ArrayView1<'_, f64>,
    schedule: &ScheduleSpec,
    k: usize,
) -> Result<Array1<f64>> {
    check_len(x_k.len(), eps_hat.len())?;
    let (c, sigma, c_prev, sigma_prev) = reverse_coefficients(schedule, k)?;
    if c < MIN_SIGNAL {
        return Err(Error::SingularStep(k));
    }
    let x0_hat = (&x_k - &(&eps_hat * sigma)) / c;
    Ok(&x0_hat * c_prev + &eps_hat * sigma_prev)
}

/// `x̂₀ = (x_k − t_k v − σ_k ε̂) / c_k`, then
/// `c_{k−1} x̂₀ + t_{k−1} v + σ_{k−1} ε̂` with `v = δ t_ortho`.
pub fn ddim_step_ortho(
    x_k: ArrayView1<'_, f64>,
    eps_hat: ArrayView1<'_, f64>,
    schedule: &ScheduleSpec,
    ortho: &OrthoTimeConfig,
    k: usize,
) -> Result<Array1<f64>> {
    ddim_step_on_axis(x_k, eps_hat, schedule, &ortho.time_axis(None)?, k)
}

pub fn ddim_step_on_axis(
    x_k: ArrayView1<'_, f64>,
    eps_hat: ArrayView1<'_, f64>,
    schedule: &ScheduleSpec,
    axis: &TimeAxis<'_>,
    k: usize,
) -> Result<Array1<f64>> {
    check_len(axis.direction.len(), x_k.len())?;
    check_len(x_k.len(), eps_hat.len())?;
    let (c, sigma, c_prev, sigma_prev) = reverse_coefficients(schedule, k)?;
    if c < MIN_SIGNAL {
        return Err(Error::SingularStep(k));
    }
    let t = schedule.time(k)?;
    let t_prev = schedule.time(k - 1)?;
    let v = &axis.direction * axis.delta;
    let x0_hat = (&x_k - &(&v * t) - &(&eps_hat * sigma)) / c;
    Ok(&x0_hat * c_prev + &(&v * t_prev) + &eps_hat * sigma_prev)
}

/// Reverse step that also covers a vanishing signal coefficient. With
/// `c_k = 0` the state carries no information about `x₀`, and for
/// mean-centred data the posterior mean `E[x₀ | x_k]` is the origin, so the
/// step continues from `x̂₀ = 0`.
fn reverse_step(
    x_k: ArrayView1<'_, f64>,
    eps_hat: ArrayView1<'_, f64>,
    schedule: &ScheduleSpec,
    axis: Option<&TimeAxis<'_>>,
    k: usize,
) -> Result<Array1<f64>> {
    let stepped = match axis {
        Some(a) => ddim_step_on_axis(x_k, eps_hat, schedule, a, k),
        None => ddim_step_plain(x_k, eps_hat, schedule, k),
    };
    match stepped {
        Err(Error::SingularStep(_)) => {
            let (_, sigma_prev) = schedule.coefficients(k - 1)?;
            let mut out = &eps_hat * sigma_prev;
            if let Some(a) = axis {
                out += &(&a.direction * (a.delta * schedule.time(k - 1)?));
            }
            Ok(out)
        }
        other => other,
    }
}

/// Which time direction each generated row uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ClassChoice {
    /// The shared direction, or round-robin over classes when the
    /// configuration carries class directions.
    #[default]
    Auto,
    /// Every row uses this class's direction.
    Fixed(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SampleOptions {
    /// Project model outputs onto `t_ortho^⊥` before each orthogonal step.
    pub project_eps: bool,
}

impl Default for SampleOptions {
    fn default() -> Self {
        SampleOptions { project_eps: true }
    }
}

/// Standard normal draw for row `row` of a sampling run: stream `row` of
/// `seed`, `dim` variates in order.
pub fn initial_noise(seed: u64, row: usize, dim: usize) -> Array1<f64> {
    let mut g = rng::stream(seed, row as u64);
    let mut z = Array1::zeros(dim);
    rng::fill_normal(&mut g, z.as_slice_mut().unwrap());
    z
}

/// Runs the reverse chain `k = T … 1` for `n` rows.
pub fn sample<P: NoisePredictor + ?Sized>(
    model: &P,
    schedule: &ScheduleSpec,
    ortho: Option<&OrthoTimeConfig>,
    n: usize,
    seed: u64,
    class: ClassChoice,
    options: SampleOptions,
) -> Result<SampleBatch> {
    sample_with_observer(model, schedule, ortho, n, seed, class, options, |_, _| {})
}

/// [`sample`], calling `observe(k, x_k)` on the whole batch at every step
/// from `T` down to `0`.
#[allow(clippy::too_many_arguments)]
pub fn sample_with_observer<P, F>(
    model: &P,
    schedule: &ScheduleSpec,
    ortho: Option<&OrthoTimeConfig>,
    n: usize,
    seed: u64,
    class: ClassChoice,
    options: SampleOptions,
    mut observe: F,
) -> Result<SampleBatch>
where
    P: NoisePredictor + ?Sized,
    F: FnMut(usize, &Array2<f64>),
{
    let dim = model.width();
    if let Some(o) = ortho {
        check_len(dim, o.dim())?;
    }
    let row_classes: Option<Vec<usize>> = match (ortho, class) {
        (_, ClassChoice::Fixed(c)) => {
            let o = ortho.ok_or_else(|| {
                Error::Parameter("class id requires an orthogonal configuration".into())
            })?;
            o.time_axis(Some(c))?;
            Some(vec![c; n])
        }
        (Some(o), ClassChoice::Auto) if o.num_classes() > 0 => {
            Some((0..n).map(|i| i % o.num_classes()).collect())
        }
        _ => None,
    };
    let axes: Option<Vec<TimeAxis<'_>>> = match ortho {
        Some(o) => Some(
            (0..n)
                .map(|i| o.time_axis(row_classes.as_ref().map(|c| c[i])))
                .collect::<Result<_>>()?,
        ),
        None => None,
    };

    let steps = schedule.steps();
    let (_, sigma_t) = schedule.coefficients(steps)?;
    let t_end = schedule.time(steps)?;
    let mut x = Array2::zeros((n, dim));
    for i in 0..n {
        let z = initial_noise(seed, i, dim);
        let row = match &axes {
            Some(a) => {
                let a = &a[i];
                &project_out(z.view(), a.direction) * sigma_t + &(&a.direction * (t_end * a.delta))
            }
            None => z * sigma_t,
        };
        x.row_mut(i).assign(&row);
    }
    observe(steps, &x);

    for k in (1..=steps).rev() {
        let eps = model.predict_batch(x.view());
        check_len(dim, eps.ncols())?;
        let mut next = Array2::zeros((n, dim));
        for i in 0..n {
            let axis = axes.as_ref().map(|a| &a[i]);
            let e = match axis {
                Some(a) if options.project_eps => project_out(eps.row(i), a.direction),
                _ => eps.row(i).to_owned(),
            };
            let stepped = reverse_step(x.row(i), e.view(), schedule, axis, k)?;
            next.row_mut(i).assign(&stepped);
        }
        x = next;
        observe(k - 1, &x);
    }
    SampleBatch::new(x, row_classes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schedule::ScheduleKind;
    use ndarray::array;

    fn norm(v: ArrayView1<'_, f64>) -> f64 {
        v.dot(&v).sqrt()
    }

    fn ambient(d: usize) -> AmbientConfig {
        AmbientConfig::new(d, 2).unwrap()
    }

    #[test]
    fn forward_plain_examples() {
        let s = ScheduleSpec::new(ScheduleKind::UniformRadialVp, 10).unwrap();
        let x0 = array![0.3, -0.2, 0.0];
        let z = array![1.0, 2.0, 3.0];
        assert_eq!(forward_plain(x0.view(), 0, &s, z.view()).unwrap(), x0);
        let end = forward_plain(x0.view(), 10, &s, z.view()).unwrap();
        assert_eq!(end, z);
        let custom = ScheduleSpec::from_parts(
            ScheduleKind::UniformRadialVp,
            vec![1.0, 0.8],
            vec![0.0, 0.6],
            None,
            None,
        )
        .unwrap();
        let x = forward_plain(array![1.0, 0.0].view(), 1, &custom, array![0.0, 1.0].view()).unwrap();
        assert!((x[0] - 0.8).abs() < 1e-15 && (x[1] - 0.6).abs() < 1e-15);
        assert!(forward_plain(x0.view(), 1, &s, array![1.0].view()).is_err());
        assert!(forward_plain(x0.view(), 11, &s, z.view()).is_err());
    }

    #[test]
    fn projection_examples() {
        let a = AmbientConfig::new(2, 1).unwrap();
        let o = OrthoTimeConfig::axis(&a, 0.1).unwrap();
        assert_eq!(project_ortho(array![3.0, 4.0].view(), &o).unwrap(), array![3.0, 0.0]);
        assert_eq!(project_ortho(array![0.0, 2.5].view(), &o).unwrap(), array![0.0, 0.0]);
        assert_eq!(project_ortho(array![7.0, 0.0].view(), &o).unwrap(), array![7.0, 0.0]);
        assert!(project_ortho(array![1.0, 2.0, 3.0].view(), &o).is_err());
    }

    #[test]
    fn ortho_config_validation() {
        let d = 2;
        assert!(OrthoTimeConfig::new(array![0.0, 0.0, 1.0], 0.1, None, d).is_ok());
        assert!(OrthoTimeConfig::new(array![0.0, 0.0, 2.0], 0.1, None, d).is_err());
        assert!(OrthoTimeConfig::new(array![0.6, 0.0, 0.8], 0.1, None, d).is_err());
        assert!(OrthoTimeConfig::new(array![0.0, 0.0, 1.0], -0.1, None, d).is_err());
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let bad = vec![array![0.0, 0.0, 1.0, 0.0], array![0.0, 0.0, s, s]];
        assert!(OrthoTimeConfig::new(array![0.0, 0.0, 1.0, 0.0], 0.1, Some(bad), d).is_err());
        let a = ambient(8);
        let o = OrthoTimeConfig::class_axes(&a, 0.1, 3).unwrap();
        assert_eq!(o.num_classes(), 3);
        assert_eq!(o.time_axis(Some(2)).unwrap().direction[4], 1.0);
        assert!(o.time_axis(Some(3)).is_err());
        assert!(OrthoTimeConfig::axis(&a, 0.1).unwrap().time_axis(Some(0)).is_err());
        assert!(OrthoTimeConfig::class_axes(&a, 0.1, 7).is_err());
    }

    #[test]
    fn forward_ortho_examples() {
        let a = ambient(6);
        let s = ScheduleSpec::new(ScheduleKind::conventional(), 20).unwrap();
        let o = OrthoTimeConfig::axis(&a, 0.7).unwrap();
        let x0 = array![0.4, -0.3, 0.0, 0.0, 0.0, 0.0];
        let z = initial_noise(3, 0, 6);
        assert_eq!(forward_ortho(x0.view(), 0, &s, &o, z.view()).unwrap(), x0);
        for k in 0..=20 {
            let x = forward_ortho(x0.view(), k, &s, &o, z.view()).unwrap();
            let inner = x.dot(&o.direction());
            assert!((inner - s.grid()[k] * 0.7).abs() < 1e-10);
        }
        let zero = o.with_delta(0.0).unwrap();
        let zp = project_ortho(z.view(), &o).unwrap();
        for k in [1, 7, 20] {
            let a = forward_ortho(x0.view(), k, &s, &zero, z.view()).unwrap();
            let b = forward_plain(x0.view(), k, &s, zp.view()).unwrap();
            assert!(norm((&a - &b).view()) < 1e-15);
        }
        let off = array![0.4, -0.3, 0.2, 0.0, 0.0, 0.0];
        assert!(matches!(
            forward_ortho(off.view(), 3, &s, &o, z.view()),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn ddim_plain_round_trip() {
        let s = ScheduleSpec::new(ScheduleKind::conventional(), 50).unwrap();
        let x0 = array![0.5, -0.1, 0.0, 0.0];
        let z = initial_noise(1, 0, 4);
        for k in 1..=50 {
            let xk = forward_plain(x0.view(), k, &s, z.view()).unwrap();
            let prev = ddim_step_plain(xk.view(), z.view(), &s, k).unwrap();
            let expect = forward_plain(x0.view(), k - 1, &s, z.view()).unwrap();
            assert!(norm((&prev - &expect).view()) < 1e-10);
        }
        let x1 = forward_plain(x0.view(), 1, &s, z.view()).unwrap();
        let rec = ddim_step_plain(x1.view(), z.view(), &s, 1).unwrap();
        assert!(norm((&rec - &x0).view()) < 1e-14);
        // zero-signal case
        let (_, sk) = s.coefficients(10).unwrap();
        let (_, sp) = s.coefficients(9).unwrap();
        let out = ddim_step_plain((&z * sk).view(), z.view(), &s, 10).unwrap();
        assert!(norm((&out - &(&z * sp)).view()) < 1e-14);
        assert!(ddim_step_plain(x1.view(), z.view(), &s, 0).is_err());
    }

    #[test]
    fn ddim_singular_terminal() {
        let s = ScheduleSpec::new(ScheduleKind::UniformRadialVp, 10).unwrap();
        let z = array![1.0, 0.0, 0.0];
        assert!(matches!(
            ddim_step_plain(z.view(), z.view(), &s, 10),
            Err(Error::SingularStep(10))
        ));
    }

    #[test]
    fn ddim_ortho_round_trip_and_reduction() {
        let a = ambient(5);
        let s = ScheduleSpec::new(ScheduleKind::LateExpansionVp, 30).unwrap();
        let o = OrthoTimeConfig::axis(&a, 0.9).unwrap();
        let x0 = array![-0.2, 0.7, 0.0, 0.0, 0.0];
        let z = initial_noise(9, 0, 5);
        let zo = project_ortho(z.view(), &o).unwrap();
        for k in 1..30 {
            let xk = forward_ortho(x0.view(), k, &s, &o, z.view()).unwrap();
            let prev = ddim_step_ortho(xk.view(), zo.view(), &s, &o, k).unwrap();
            let expect = forward_ortho(x0.view(), k - 1, &s, &o, z.view()).unwrap();
            assert!(norm((&prev - &expect).view()) < 1e-10);
            let inner = prev.dot(&o.direction());
            assert!((inner - s.grid()[k - 1] * 0.9).abs() < 1e-10);
        }
        let flat = o.with_delta(0.0).unwrap();
        let xk = forward_ortho(x0.view(), 12, &s, &flat, z.view()).unwrap();
        let a1 = ddim_step_ortho(xk.view(), zo.view(), &s, &flat, 12).unwrap();
        let a2 = ddim_step_plain(xk.view(), zo.view(), &s, 12).unwrap();
        assert!(norm((&a1 - &a2).view()) < 1e-15);
    }

    struct Zero(usize);

    impl NoisePredictor for Zero {
        fn width(&self) -> usize {
            self.0
        }
        fn predict_batch(&self, x: ArrayView2<'_, f64>) -> Array2<f64> {
            Array2::zeros(x.raw_dim())
        }
    }

    #[test]
    fn sample_deterministic_and_shaped() {
        let s = ScheduleSpec::new(ScheduleKind::UniformRadialVp, 10).unwrap();
        let m = Zero(4);
        let a = sample(&m, &s, None, 5, 3, ClassChoice::Auto, SampleOptions::default()).unwrap();
        let b = sample(&m, &s, None, 5, 3, ClassChoice::Auto, SampleOptions::default()).unwrap();
        assert_eq!(a, b);
        assert_eq!((a.len(), a.dim()), (5, 4));
        let none = sample(&m, &s, None, 0, 3, ClassChoice::Auto, SampleOptions::default()).unwrap();
        assert!(none.is_empty());
        assert!(sample(&m, &s, None, 2, 3, ClassChoice::Fixed(0), SampleOptions::default()).is_err());
        let o = OrthoTimeConfig::axis(&ambient(5), 0.1).unwrap();
        assert!(sample(&m, &s, Some(&o), 2, 3, ClassChoice::Auto, SampleOptions::default()).is_err());
    }

    #[test]
    fn sample_class_rows() {
        let a = ambient(6);
        let s = ScheduleSpec::new(ScheduleKind::conventional(), 5).unwrap();
        let o = OrthoTimeConfig::class_axes(&a, 0.5, 3).unwrap();
        let m = Zero(6);
        let b = sample(&m, &s, Some(&o), 4, 1, ClassChoice::Auto, SampleOptions::default()).unwrap();
        assert_eq!(b.labels().unwrap(), &[0, 1, 2, 0]);
        let b = sample(&m, &s, Some(&o), 2, 1, ClassChoice::Fixed(2), SampleOptions::default()).unwrap();
        assert_eq!(b.labels().unwrap(), &[2, 2]);
        assert!(sample(&m, &s, Some(&o), 2, 1, ClassChoice::Fixed(3), SampleOptions::default()).is_err());
    }

    #[test]
    fn least_variance_direction() {
        let a = ambient(5);
        // normal coords 2,3,4 with variances ~ 1, 4, 0.01 → picks coordinate 4
        let mut g = rng::seeded(0);
        let mut data = Array2::zeros((400, 5));
        for mut r in data.rows_mut() {
            r[0] = rng::normal(&mut g);
            r[2] = rng::normal(&mut g);
            r[3] = 2.0 * rng::normal(&mut g);
            r[4] = 0.1 * rng::normal(&mut g);
        }
        let b = SampleBatch::new(data, None).unwrap();
        let o = OrthoTimeConfig::least_variance(&b, &a, 0.2).unwrap();
        assert!(o.direction()[4] > 0.99);
        assert_eq!(o.direction()[0], 0.0);
        let clean = crate::dataset::embed(&crate::dataset::swiss_roll(50, 0.0, 0).unwrap(), 5).unwrap();
        let o = OrthoTimeConfig::least_variance(&clean, &a, 0.2).unwrap();
        assert_eq!(o.direction()[2], 1.0);
    }
}
