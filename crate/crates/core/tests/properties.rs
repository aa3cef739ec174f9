use std::f64::consts::PI;

use proptest::prelude::*;

use cilab::calculus::{antidivergence, bilinear_antidivergence};
use cilab::driver::{init_from_target, NormLedger, RunConfig};
use cilab::mikado::build_blocks;
use cilab::perturbation::{check_regime, smoothstep, support_margin, time_ramp};
use cilab::temporal::build_oscillator;
use cilab::torus_field::{GridSpec, ScalarField, VectorField};

fn grid() -> GridSpec {
    GridSpec::new(3, 16, 4).unwrap()
}

/// Zero-mean field from `(ξ, amplitude, phase)` triples, `|ξ_i| ≤ 3`.
fn field_from(modes: &[([i8; 3], f64, f64)], time_weight: bool) -> ScalarField {
    ScalarField::from_fn(grid(), |t, x| {
        let w = if time_weight { 1.0 + (2.0 * PI * t).sin() } else { 1.0 };
        modes
            .iter()
            .filter(|(xi, _, _)| xi.iter().any(|&v| v != 0))
            .map(|(xi, c, ph)| {
                let phase: f64 = xi.iter().zip(x).map(|(&k, y)| k as f64 * y).sum();
                w * c * (2.0 * PI * phase + ph).cos()
            })
            .sum()
    })
}

fn modes() -> impl Strategy<Value = Vec<([i8; 3], f64, f64)>> {
    prop::collection::vec((prop::array::uniform3(-3i8..=3), -1.0f64..1.0, 0.0f64..2.0 * PI), 1..6)
}

fn max_diff(a: &ScalarField, b: &ScalarField) -> f64 {
    a.sub(b).unwrap().max_abs()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn antidivergence_inverts_divergence(m in modes(), offset in -2.0f64..2.0) {
        let f = field_from(&m, true);
        let div = antidivergence(&f.map(|v| v + offset)).unwrap().divergence().unwrap();
        prop_assert!(max_diff(&div, &f) <= 1e-12 * (1.0 + f.max_abs()));
    }

    #[test]
    fn bilinear_antidivergence_divergence(m in modes(), a_modes in modes()) {
        let f = field_from(&m, false);
        let a = field_from(&a_modes, true).map(|v| v + 3.0);
        let af = a.mul(&f).unwrap();
        let means = af.space_means();
        let want = ScalarField::from_slices(grid(), |j| af.slice(j).iter().map(|v| v - means[j]).collect()).unwrap();
        let got = bilinear_antidivergence(&a, &f).unwrap().divergence().unwrap();
        prop_assert!(max_diff(&got, &want) <= 1e-12 * (1.0 + af.max_abs()));
    }

    #[test]
    fn static_targets_have_no_defect(m in modes()) {
        let g = grid();
        let f = field_from(&m, false);
        let t = init_from_target(&f).unwrap();
        prop_assert_eq!(t.r.max_abs(), 0.0);
        prop_assert_eq!(t.u.max_abs(), 0.0);
        prop_assert_eq!(t.grid(), g);
    }

    #[test]
    fn base_triple_solves_defect_equation(m in modes()) {
        let t = init_from_target(&field_from(&m, true)).unwrap();
        prop_assert!(t.residual <= 1e-12);
    }

    #[test]
    fn regime_gate(p in 0.5f64..6.0, q in 0.5f64..6.0) {
        let admissible = p > 1.0 && q >= 1.0 && 1.0 / p + 1.0 / q > 1.0;
        prop_assert_eq!(check_regime(p, q).is_ok(), admissible);
    }

    #[test]
    fn oscillator_pairing_and_corrector(kexp in 0u32..4, sexp in 0u32..3) {
        let (kappa, sigma) = (1usize << kexp, 1usize << sexp);
        let n = (64 * kappa * sigma).max(256);
        let osc = build_oscillator(kappa, sigma, n).unwrap();
        prop_assert!((osc.pairing_mean() - 1.0).abs() <= 1e-10);
        prop_assert!(osc.h().iter().all(|v| v.abs() <= 1.0 + 1e-8));
        for (g, gt) in osc.g().iter().zip(osc.g_tilde()) {
            prop_assert_eq!(*gt, kappa as f64 * g);
        }
    }

    #[test]
    fn smoothstep_and_ramp_are_monotone(a in 0.0f64..1.0, b in 0.0f64..1.0, r in 0.01f64..0.125) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(smoothstep(lo) <= smoothstep(hi));
        prop_assert!((0.0..=1.0).contains(&smoothstep(a)));
        let t = lo * 0.5;
        prop_assert!(time_ramp(t, r) <= time_ramp(t + 0.5 * (hi - lo) * 0.5, r) + 1e-15);
        if t < 0.5 * r {
            prop_assert_eq!(time_ramp(t, r), 0.0);
        }
        if t >= r {
            prop_assert_eq!(time_ramp(t, r), 1.0);
        }
    }

    #[test]
    fn support_margin_bounds(scale in 0.0f64..100.0) {
        let g = grid();
        let c = ScalarField::constant(g, scale);
        let r = VectorField::new(vec![c.clone(), c.clone(), c]).unwrap();
        let m = support_margin(&r);
        prop_assert!(m <= 0.125 && m > 0.0);
        prop_assert!(m <= 1.0 / (12.0 * (scale + 1.0)) + 1e-15);
    }

    #[test]
    fn config_text_roundtrip(p in 1.1f64..4.0, mu in 8usize..64, eps in 0.01f64..2.0, iters in 0usize..5) {
        let cfg = RunConfig {
            p,
            q: p / (p - 1.0) * 0.9,
            mu: vec![mu, 2 * mu],
            epsilon: eps,
            iterations: iters,
            ..RunConfig::default()
        };
        prop_assert_eq!(RunConfig::parse(&cfg.to_text()).unwrap(), cfg);
    }

    #[test]
    fn ledger_roundtrip(values in prop::collection::vec(-1e6f64..1e6, 1..10)) {
        let mut l = NormLedger::new();
        for (i, v) in values.iter().enumerate() {
            l.push_plain(i + 1, 2.0, 1.5, &[("R_total".into(), *v)]);
        }
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("l.csv");
        l.write_csv(&path).unwrap();
        prop_assert_eq!(NormLedger::read_csv(&path).unwrap(), l);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(4))]

    #[test]
    fn mikado_blocks_are_separated_and_normalized(mexp in 0u32..2, p in 1.2f64..4.0) {
        let mu = 8.0 * (1 << mexp) as f64;
        let n = 4 * mu as usize;
        let g = GridSpec::new(3, n, 4).unwrap();
        let blocks = build_blocks(3, mu, p, n).unwrap();
        let fields: Vec<_> = blocks.iter().map(|b| b.to_fields(g, 1).unwrap()).collect();
        for (k, (phi, w, _)) in fields.iter().enumerate() {
            prop_assert!(phi.mean().abs() <= 1e-12 * phi.max_abs());
            prop_assert_eq!(w.divergence().unwrap().max_abs(), 0.0);
            prop_assert!((w.component(k).mul(phi).unwrap().mean() - 1.0).abs() <= 1e-12);
            for (kk, (_, w2, _)) in fields.iter().enumerate() {
                if kk != k {
                    prop_assert_eq!(w2.scalar_mul(phi).unwrap().max_abs(), 0.0);
                }
            }
        }
    }
}
