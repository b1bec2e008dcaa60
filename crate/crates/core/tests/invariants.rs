use proptest::prelude::*;

use homolab::adjoint::{stationary_measure_op, NullVectorMethod};
use homolab::clt::flatness_block;
use homolab::field::{CoefficientField, EllipticityParams, FieldDescriptor, Topology};
use homolab::harness::config::{ExperimentConfig, ExperimentKind, FieldSpec};
use homolab::operator::{assemble_generator, stencil};
use homolab::parabolic::{parabolic_step, solve_cauchy_dirichlet, Scheme};
use homolab::{fit_rate, FitWindow, Grid, SymMat};

fn torus_field(seed: u64, big: f64, period: u32, dim: usize) -> CoefficientField {
    FieldDescriptor::new(seed, EllipticityParams::new(1.0, big), dim, Topology::Torus { period })
        .build()
        .unwrap()
}

fn free_field(seed: u64, big: f64) -> CoefficientField {
    FieldDescriptor::new(seed, EllipticityParams::new(1.0, big), 2, Topology::FreeSpace)
        .build()
        .unwrap()
}

fn data(seed: u64, n: usize) -> Vec<f64> {
    let s = homolab::rng::StreamId::new(seed, 7, [0, 0]);
    (0..n).map(|k| 2.0 * s.uniform(k as u64) - 1.0).collect()
}

fn scheme(implicit: bool) -> Scheme {
    if implicit {
        Scheme::Implicit { dt: 0.05 }
    } else {
        Scheme::Explicit
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn stencils_are_positive_type_with_zero_row_sum(d1 in 1.0f64..4.0, d2 in 1.0f64..4.0, t in -0.9f64..0.9) {
        let a = SymMat::new2(d1, t * d1.min(d2), d2);
        let w = stencil(&a);
        prop_assert!(w.iter().all(|&(di, dj, v)| (di, dj) == (0, 0) || v >= 0.0));
        let sum: f64 = w.iter().map(|e| e.2).sum();
        prop_assert!(sum.abs() <= 1e-12 * (d1 + d2));
    }

    #[test]
    fn evolution_is_linear(seed in any::<u64>(), alpha in -3.0f64..3.0, beta in -3.0f64..3.0, implicit in any::<bool>()) {
        let f = free_field(seed, 2.0);
        let g = Grid::centered_box(2, [0.0; 2], 2.0, 0.5).unwrap();
        let op = assemble_generator(&f, &g).unwrap();
        let (u, v) = (data(seed, g.len()), data(seed ^ 1, g.len()));
        let w: Vec<f64> = u.iter().zip(&v).map(|(a, b)| alpha * a + beta * b).collect();
        let zero = |_: f64, _: [f64; 2]| 0.0;
        let run = |x: &[f64]| solve_cauchy_dirichlet(&op, x, Some(&zero), 0.5, &[], scheme(implicit)).unwrap().snapshots[0].values.clone();
        let (ru, rv, rw) = (run(&u), run(&v), run(&w));
        let scale = 1.0 + alpha.abs() + beta.abs();
        for k in 0..g.len() {
            prop_assert!((rw[k] - alpha * ru[k] - beta * rv[k]).abs() <= 1e-12 * scale);
        }
    }

    #[test]
    fn comparison_and_maximum_principles(seed in any::<u64>(), gap in 0.0f64..1.0, implicit in any::<bool>()) {
        let f = free_field(seed, 3.0);
        let g = Grid::centered_box(2, [0.0; 2], 2.5, 0.5).unwrap();
        let op = assemble_generator(&f, &g).unwrap();
        let u0 = data(seed, g.len());
        let v0: Vec<f64> = u0.iter().zip(data(seed ^ 3, g.len())).map(|(a, b)| a + gap * (b + 1.0)).collect();
        let bu = |_: f64, x: [f64; 2]| 0.3 * x[0].sin();
        let bv = |_: f64, x: [f64; 2]| 0.3 * x[0].sin() + gap;
        let u = solve_cauchy_dirichlet(&op, &u0, Some(&bu), 0.7, &[0.2], scheme(implicit)).unwrap();
        let v = solve_cauchy_dirichlet(&op, &v0, Some(&bv), 0.7, &[0.2], scheme(implicit)).unwrap();
        let lo = u0.iter().copied().fold(-0.3, f64::min);
        let hi = u0.iter().copied().fold(0.3, f64::max);
        for (su, sv) in u.snapshots.iter().zip(&v.snapshots) {
            for k in 0..g.len() {
                prop_assert!(su.values[k] <= sv.values[k] + 1e-12);
                prop_assert!(su.values[k] >= lo - 1e-12 && su.values[k] <= hi + 1e-12);
            }
        }
    }

    #[test]
    fn transposed_step_conserves_mass(seed in any::<u64>(), period in 3u32..6) {
        let f = torus_field(seed, 2.0, period, 2);
        let g = Grid::torus(2, period as usize, 2).unwrap();
        let op = assemble_generator(&f, &g).unwrap();
        let adj = op.transpose();
        let mut mu: Vec<f64> = data(seed, g.len()).iter().map(|x| x.abs()).collect();
        let before: f64 = mu.iter().sum();
        let dt = 0.9 * adj.explicit_dt_bound();
        for _ in 0..50 {
            mu = parabolic_step(&adj, &mu, dt).unwrap();
        }
        let after: f64 = mu.iter().sum();
        prop_assert!((after - before).abs() <= 1e-12 * before);
        prop_assert!(mu.iter().all(|&x| x >= 0.0));
    }

    #[test]
    fn measure_pairing_is_time_invariant(seed in any::<u64>()) {
        let f = torus_field(seed, 2.0, 4, 2);
        let g = Grid::torus(2, 4, 2).unwrap();
        let op = assemble_generator(&f, &g).unwrap();
        let m = stationary_measure_op(&op, NullVectorMethod::ReducedSolve).unwrap();
        let u0 = data(seed, g.len());
        let pair = |u: &[f64]| u.iter().zip(&m.values).map(|(a, b)| a * b).sum::<f64>();
        let run = solve_cauchy_dirichlet(&op, &u0, None, 2.0, &[0.5, 1.0], Scheme::Explicit).unwrap();
        let p0 = pair(&u0);
        for s in &run.snapshots {
            prop_assert!((pair(&s.values) - p0).abs() <= 1e-9);
        }
    }

    #[test]
    fn flatness_is_a_seminorm(seed in any::<u64>(), c in -2.0f64..2.0, shift in -5.0f64..5.0) {
        let n = 9;
        let f = data(seed, n * n);
        let g = data(seed ^ 5, n * n);
        let norm = |v: &[f64]| flatness_block(v, n, 2, 0.5).unwrap().total;
        let shifted: Vec<f64> = f.iter().map(|x| x + shift).collect();
        let scaled: Vec<f64> = f.iter().map(|x| c * x).collect();
        let sum: Vec<f64> = f.iter().zip(&g).map(|(a, b)| a + b).collect();
        prop_assert!(norm(&f) >= 0.0);
        prop_assert!((norm(&shifted) - norm(&f)).abs() <= 1e-12);
        prop_assert!((norm(&scaled) - c.abs() * norm(&f)).abs() <= 1e-12);
        prop_assert!(norm(&sum) <= norm(&f) + norm(&g) + 1e-12);
        prop_assert!(norm(&vec![shift; n * n]) <= 1e-14);
    }

    #[test]
    fn fields_are_deterministic_and_in_band(seed in any::<u64>(), x in -50.0f64..50.0, y in -50.0f64..50.0) {
        let a = free_field(seed, 2.5);
        let b = free_field(seed, 2.5);
        let va = a.evaluate(&[x, y]).unwrap();
        prop_assert_eq!(va, b.evaluate(&[x, y]).unwrap());
        let (l, u) = va.eigenvalues();
        prop_assert!(l >= 1.0 - 1e-12 && u <= 2.5 + 1e-12);
        let back = CoefficientField::from_bytes(&a.to_bytes()).unwrap();
        prop_assert_eq!(back.evaluate(&[x, y]).unwrap(), va);
    }

    #[test]
    fn power_laws_are_recovered(p in 0.1f64..3.0, c in 0.1f64..10.0) {
        let rows: Vec<(f64, f64)> = (0..5).map(|k| { let s = 2f64.powi(k); (s, c * s.powf(-p)) }).collect();
        let t = fit_rate(&rows, FitWindow::All).unwrap();
        prop_assert!((t.exponent - p).abs() < 1e-10);
        prop_assert!((t.prefactor - c).abs() < 1e-9 * c);
        prop_assert!(t.r_squared >= 0.0 && t.r_squared <= 1.0 + 1e-12);
    }

    #[test]
    fn configs_round_trip(h_inv in 1u32..9, seeds in proptest::collection::vec(any::<u64>(), 0..4), rtol in 1e-7f64..1e-3) {
        let d = FieldDescriptor::new(1, EllipticityParams::new(1.0, 2.0), 2, Topology::Torus { period: 9 });
        let mut c = ExperimentConfig::new(ExperimentKind::Clt, Some(FieldSpec::Random { descriptor: d }), "out");
        c.numerics.h = 1.0 / h_inv as f64;
        c.numerics.rtol = rtol;
        c.seeds = seeds;
        let back = ExperimentConfig::from_json(&serde_json::to_string(&c).unwrap()).unwrap();
        prop_assert_eq!(back.hash(), c.hash());
        prop_assert_eq!(back, c);
    }
}
