use ndarray::Array1;
use proptest::prelude::*;

use tudm::checkpoint::Checkpoint;
use tudm::dataset::SampleBatch;
use tudm::diffusion::{ddim_step_ortho, forward_ortho, project_ortho, OrthoTimeConfig};
use tudm::eval::sliced_distance;
use tudm::geometry::{
    audit_disjointness, kappa_epsilon, rho_epsilon, shell_band, AmbientConfig, Separation,
};
use tudm::model::DenoiserModel;
use tudm::schedule::{ScheduleKind, ScheduleSpec};

fn kind() -> impl Strategy<Value = ScheduleKind> {
    prop_oneof![
        Just(ScheduleKind::conventional()),
        Just(ScheduleKind::UniformRadialVp),
        Just(ScheduleKind::LateExpansionVp),
        Just(ScheduleKind::OtGeodesic),
    ]
}

fn sigma_sequence() -> impl Strategy<Value = Vec<f64>> {
    (1e-3..1.0f64, prop::collection::vec(1.0..2.0f64, 1..40)).prop_map(|(first, ratios)| {
        let mut s = vec![0.0, first];
        for r in ratios {
            let last = *s.last().unwrap();
            s.push(last * r);
        }
        s
    })
}

fn unit_normal_direction(dim: usize, raw: &[f64]) -> Array1<f64> {
    let mut d = Array1::zeros(dim);
    for (i, v) in raw.iter().enumerate() {
        d[2 + i] = *v;
    }
    let n = d.dot(&d).sqrt();
    if n < 1e-6 {
        d.fill(0.0);
        d[2] = 1.0;
        d
    } else {
        d / n
    }
}

proptest! {
    #[test]
    fn schedules_valid_for_any_length(kind in kind(), steps in 1usize..400) {
        let s = ScheduleSpec::new(kind, steps).unwrap();
        prop_assert!(s.validate(1e-12).is_empty());
    }

    #[test]
    fn radius_ratio_gap_forms_agree(sigma in sigma_sequence(), eps in 1e-4..0.24f64) {
        let a = AmbientConfig::new(64, 2).unwrap();
        for w in sigma.windows(2) {
            let r = Separation::Radius.holds(w[0], w[1], eps, &a).unwrap();
            prop_assert_eq!(r, Separation::Ratio.holds(w[0], w[1], eps, &a).unwrap());
            prop_assert_eq!(r, Separation::Gap.holds(w[0], w[1], eps, &a).unwrap());
            // the increment form is implied by, but weaker than, the others
            if r {
                prop_assert!(Separation::Increment.holds(w[0], w[1], eps, &a).unwrap());
            }
        }
    }

    #[test]
    fn audit_matches_ratio_form(sigma in sigma_sequence(), eps in 1e-4..0.24f64) {
        let a = AmbientConfig::new(16, 2).unwrap();
        let s = ScheduleSpec::from_sigma_sequence(sigma.clone()).unwrap();
        let audit = audit_disjointness(&s, &a, eps).unwrap();
        let rho = rho_epsilon(eps).unwrap();
        for (p, w) in audit.pairs.iter().zip(sigma.windows(2)) {
            prop_assert_eq!(p.pass, w[1] > rho * w[0]);
        }
    }

    #[test]
    fn band_ordering_and_relative_width(kind in kind(), steps in 1usize..200, frac in 0.0..1.0f64, eps in 1e-4..0.24f64, dim in 3usize..2048) {
        let s = ScheduleSpec::new(kind, steps).unwrap();
        let a = AmbientConfig::new(dim, 2).unwrap();
        let k = ((steps as f64) * frac) as usize;
        let b = shell_band(&s, k, &a, eps).unwrap();
        prop_assert!(b.r_minus <= b.radius && b.radius <= b.r_plus);
        if b.radius > 0.0 {
            let rel = b.width / b.radius;
            prop_assert!((rel - kappa_epsilon(eps).unwrap()).abs() < 1e-12);
        }
    }

    #[test]
    fn forward_ortho_lies_on_hyperplane(
        kind in prop_oneof![Just(ScheduleKind::conventional()), Just(ScheduleKind::UniformRadialVp), Just(ScheduleKind::LateExpansionVp)],
        x in prop::array::uniform2(-3.0..3.0f64),
        raw in prop::collection::vec(-1.0..1.0f64, 6),
        z in prop::collection::vec(-4.0..4.0f64, 8),
        delta in 0.0..5.0f64,
        frac in 0.0..=1.0f64,
    ) {
        let dir = unit_normal_direction(8, &raw);
        let o = OrthoTimeConfig::new(dir.clone(), delta, None, 2).unwrap();
        let s = ScheduleSpec::new(kind, 50).unwrap();
        let k = ((50.0 * frac) as usize).min(50);
        let mut x0 = Array1::zeros(8);
        x0[0] = x[0];
        x0[1] = x[1];
        let z = Array1::from(z);
        let xk = forward_ortho(x0.view(), k, &s, &o, z.view()).unwrap();
        let t = s.time(k).unwrap();
        prop_assert!((xk.dot(&dir) - t * delta).abs() < 1e-10);
        if k >= 1 && s.c()[k] > 1e-6 {
            let eps = project_ortho(z.view(), &o).unwrap();
            let prev = ddim_step_ortho(xk.view(), eps.view(), &s, &o, k).unwrap();
            prop_assert!((prev.dot(&dir) - s.time(k - 1).unwrap() * delta).abs() < 1e-10);
        }
    }

    #[test]
    fn checkpoint_round_trip(
        hidden in prop::collection::vec(1usize..12, 0..3),
        seed in any::<u64>(),
        steps in 1usize..50,
        kind in kind(),
        classes in 0usize..4,
        delta in 0.0..3.0f64,
    ) {
        let a = AmbientConfig::new(7, 2).unwrap();
        let mut sizes = vec![7];
        sizes.extend(&hidden);
        sizes.push(7);
        let ortho = match classes {
            0 => None,
            1 => Some(OrthoTimeConfig::axis(&a, delta).unwrap()),
            c => Some(OrthoTimeConfig::class_axes(&a, delta, c).unwrap()),
        };
        let ck = Checkpoint {
            ambient: a,
            schedule: ScheduleSpec::new(kind, steps).unwrap(),
            ortho,
            model: DenoiserModel::init(&sizes, seed).unwrap(),
        };
        let mut buf = Vec::new();
        ck.write_to(&mut buf).unwrap();
        prop_assert_eq!(Checkpoint::read_from(&buf[..]).unwrap(), ck);
        // every strict prefix is rejected
        let cut = buf.len() / 2;
        prop_assert!(Checkpoint::read_from(&buf[..cut]).is_err());
    }
}

fn batch(rows: &[[f64; 3]]) -> SampleBatch {
    let data = ndarray::Array2::from_shape_vec((rows.len(), 3), rows.iter().flatten().copied().collect()).unwrap();
    SampleBatch::new(data, None).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn sliced_distance_is_a_pseudometric(
        a in prop::collection::vec(prop::array::uniform3(-2.0..2.0f64), 1..30),
        b in prop::collection::vec(prop::array::uniform3(-2.0..2.0f64), 1..30),
        c in prop::collection::vec(prop::array::uniform3(-2.0..2.0f64), 1..30),
        seed in any::<u64>(),
    ) {
        let (a, b, c) = (batch(&a), batch(&b), batch(&c));
        let d = |x: &SampleBatch, y: &SampleBatch| sliced_distance(x, y, 2, 16, seed).unwrap();
        prop_assert_eq!(d(&a, &a), 0.0);
        prop_assert!(d(&a, &b) >= 0.0);
        prop_assert!((d(&a, &b) - d(&b, &a)).abs() < 1e-12);
        // each projection is an exact 1-D W1, so the average obeys the triangle inequality
        prop_assert!(d(&a, &c) <= d(&a, &b) + d(&b, &c) + 1e-12);
    }
}
