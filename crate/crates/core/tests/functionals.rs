mod common;

use proptest::prelude::*;

use gpam::functional::{builtin_functional, fhat, functional_remainder, jet, qhat, Functional, Profile, TerminalFunctional};
use gpam::noise::sample_white_noise;
use gpam::solver::solve_shifted_driver;
use gpam::spectral::{Field, TorusGrid};
use gpam::stats::linear_fit;
use gpam::taylor::solve_hierarchy;

use common::{arctan_d, cos_benchmark};

const PROFILES: [Profile; 4] = [Profile::Arctan, Profile::Tanh, Profile::BumpIntegral, Profile::Linear];

fn grid() -> TorusGrid {
    TorusGrid::new(8).unwrap()
}

fn field(seed: u64, scale: f64) -> Field {
    Field::from_fn(&grid(), |x, y| {
        let s = seed as f64 * 0.37;
        scale * ((2.0 * std::f64::consts::PI * x + s).sin() + 0.5 * (2.0 * std::f64::consts::PI * y - s).cos())
    })
}

#[test]
fn profile_derivatives_respect_their_bounds() {
    for p in PROFILES {
        for k in 0..=8 {
            let b = p.bound(k);
            for i in 0..=8000 {
                let s = -20.0 + 0.005 * i as f64;
                assert!(p.derivative(k, s).abs() <= b, "{} order {k} at {s}", p.name());
            }
        }
    }
}

#[test]
fn profile_derivatives_match_finite_differences() {
    for p in PROFILES {
        for k in 0..8 {
            for s in [-2.3, -0.4, 0.0, 0.35, 0.9, 1.7] {
                let e = 1e-5;
                let fd = (p.derivative(k, s + e) - p.derivative(k, s - e)) / (2.0 * e);
                let exact = p.derivative(k + 1, s);
                assert!((fd - exact).abs() < 1e-5 * (1.0 + exact.abs()), "{} order {k} at {s}", p.name());
            }
        }
    }
}

#[test]
fn arctan_profile_matches_closed_form() {
    for k in 0..=4 {
        for s in [-1.5, -0.2, 0.0, 0.8, 3.0] {
            assert!((Profile::Arctan.derivative(k, s) - arctan_d(k, s)).abs() < 1e-14);
        }
    }
}

#[test]
fn profile_names_round_trip() {
    for p in PROFILES {
        assert_eq!(Profile::from_name(p.name()).unwrap(), p);
    }
    assert!(Profile::from_name("nope").is_err());
    assert!(builtin_functional("nope", Profile::Tanh, field(1, 1.0)).is_err());
}

#[test]
fn terminal_gradient_is_the_riesz_representative() {
    let f = TerminalFunctional::new(Profile::Tanh, field(2, 0.8));
    let u = field(3, 0.5);
    let grad = f.terminal_gradient(&u).unwrap();
    for seed in 4..8 {
        let v = field(seed, 1.0);
        assert!((grad.inner(&v) - f.derivative(&u, &[&v]).unwrap()).abs() < 1e-13);
    }
}

proptest! {
    #[test]
    fn directional_derivatives_are_multilinear(a in -2.0..2.0f64, b in -2.0..2.0f64, s1 in 0u64..50, s2 in 0u64..50) {
        let f = TerminalFunctional::new(Profile::Arctan, field(9, 1.0));
        let u = field(10, 0.3);
        let (v, w) = (field(s1, 1.0), field(s2, 0.7));
        let lhs = f.derivative(&u, &[&v.scaled(a).add(&w.scaled(b)), &v]).unwrap();
        let rhs = a * f.derivative(&u, &[&v, &v]).unwrap() + b * f.derivative(&u, &[&w, &v]).unwrap();
        prop_assert!((lhs - rhs).abs() < 1e-12 * (1.0 + lhs.abs()));
    }

    #[test]
    fn jet_is_homogeneous_under_term_scaling(lambda in 0.1..3.0f64, seed in 0u64..100, idx in 0usize..4) {
        let f = TerminalFunctional::new(PROFILES[idx], field(seed + 1, 0.6));
        let terms: Vec<Field> = (0..5).map(|j| field(seed + 7 * j as u64, 1.0 / (1 + j) as f64)).collect();
        let scaled: Vec<Field> = terms.iter().enumerate().map(|(j, t)| if j == 0 { t.clone() } else { t.scaled(lambda.powi(j as i32)) }).collect();
        let base = jet(&f, &terms, 4).unwrap();
        let dil = jet(&f, &scaled, 4).unwrap();
        for m in 0..=4 {
            let expected = base[m] * lambda.powi(m as i32);
            prop_assert!((dil[m] - expected).abs() <= 1e-10 * (1.0 + expected.abs()));
        }
    }
}

#[test]
fn jet_matches_finite_differences_along_a_polynomial_path() {
    let f = TerminalFunctional::new(Profile::Tanh, field(5, 0.4));
    let terms: Vec<Field> = (0..4).map(|j| field(11 + j, 0.5)).collect();
    let path = |e: f64| {
        let mut acc = terms[0].clone();
        let mut fact = 1.0;
        for (j, t) in terms.iter().enumerate().skip(1) {
            fact *= j as f64;
            acc = acc.axpy(e.powi(j as i32) / fact, t);
        }
        f.evaluate(&acc).unwrap()
    };
    let j = jet(&f, &terms, 3).unwrap();
    let e = 1e-3;
    let d1 = (path(e) - path(-e)) / (2.0 * e);
    let d2 = (path(e) - 2.0 * path(0.0) + path(-e)) / (e * e);
    assert!((j[0] - path(0.0)).abs() < 1e-15);
    assert!((j[1] - d1).abs() < 1e-6 * (1.0 + d1.abs()));
    assert!((j[2] - d2).abs() < 1e-4 * (1.0 + d2.abs()));
}

#[test]
fn jet_requires_enough_terms() {
    let f = TerminalFunctional::new(Profile::Tanh, field(5, 0.4));
    assert!(jet(&f, &[field(1, 1.0)], 2).is_err());
}

#[test]
fn functional_remainder_has_the_expected_order() {
    let b = cos_benchmark(16, 32);
    let ctx = b.ctx.clone().terminal_only();
    let grid = ctx.grid().clone();
    let h = Field::cosine_mode(&grid, 1, 0, 0.2).add(&Field::constant(&grid, -0.05));
    let f = TerminalFunctional::new(Profile::Arctan, Field::constant(&grid, 2.0));
    let driver = ctx.driver(&sample_white_noise(&grid, 21)).unwrap();
    let hier = solve_hierarchy(&ctx, &h, &driver, 4).unwrap();
    let jets = fhat(&f, &hier).unwrap();
    assert_eq!(qhat(&f, &hier).unwrap(), jets[2]);
    let eps = [0.2, 0.1, 0.05, 0.025];
    let x: Vec<f64> = eps.iter().map(|e: &f64| e.ln()).collect();
    for order in 1..=3 {
        let y: Vec<f64> = eps
            .iter()
            .map(|&e| {
                let u = solve_shifted_driver(&ctx, &h, e, &driver).unwrap();
                functional_remainder(&f, u.terminal(), &jets, e, order).unwrap().abs().ln()
            })
            .collect();
        let slope = linear_fit(&x, &y).slope;
        assert!(slope >= order as f64 + 0.7, "order {order}: slope {slope}");
    }
}
