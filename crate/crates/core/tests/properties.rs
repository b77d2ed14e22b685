use std::collections::BTreeMap;

use proptest::prelude::*;
use quadinfra::ideals::{principal_cycle, verify_generator, ExperimentParams, IdealPowerFunction, UnitFunction};
use quadinfra::lattice::{dual_basis, primal_from_dual, recover_basis, reduce_mod, same_lattice, RealLattice, RecoveryParams};
use quadinfra::numfield::{make_field, working_precision};
use quadinfra::oracle::{cf_regulator, exhaustive_preimage, make_synthetic};
use quadinfra::qsim::{
    accept, accept_bound, all_outcomes, centered, collapse_label, dual_candidate, qft_spectrum_dense,
    qft_spectrum_sparse, sample_outcome, HidingFunction,
};
use quadinfra::unitgroup::trial_rng;
use quadinfra::{Lattice, Lattice32, Spectrum, Spectrum32};
use rand::Rng;
use rug::Float;

const TOL: f64 = 1.0 / (1u64 << 30) as f64;

fn support(dim: usize, q: u64) -> impl Strategy<Value = Vec<i64>> {
    prop::collection::vec(prop::collection::vec(0..q as i64, dim), 1..24).prop_map(|pts| {
        let mut pts = pts;
        pts.sort();
        pts.dedup();
        pts.concat()
    })
}

fn first_coords(pts: &[i64]) -> Vec<i64> {
    let mut out: Vec<i64> = pts.chunks(2).map(|p| p[0]).collect();
    out.sort();
    out.dedup();
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn spectrum_is_normalized_and_shift_invariant(
        dim in 1usize..=2,
        pts in support(2, 32),
        k in 1u64..=3,
        shift in prop::collection::vec(-500i64..500, 2),
    ) {
        let pts: Vec<i64> = if dim == 1 { first_coords(&pts) } else { pts };
        let a: Spectrum = qft_spectrum_dense(&pts, dim, 32, k).unwrap();
        prop_assert!((a.probs.iter().sum::<f64>() - 1.0).abs() <= TOL);
        prop_assert!(a.probs.iter().all(|&p| p >= 0.0));
        let moved: Vec<i64> = pts.chunks(dim).flat_map(|p| p.iter().zip(&shift).map(|(x, s)| x + s)).collect();
        let b: Spectrum = qft_spectrum_dense(&moved, dim, 32, k).unwrap();
        for (x, y) in a.probs.iter().zip(&b.probs) {
            prop_assert!((x - y).abs() <= TOL);
        }
    }

    #[test]
    fn sparse_and_dense_agree(pts in support(2, 16), k in 1u64..=4) {
        let dense: Spectrum = qft_spectrum_dense(&pts, 2, 16, k).unwrap();
        let sparse: Spectrum = qft_spectrum_sparse(&pts, 2, 16, k, &all_outcomes(2, 16 * k));
        for i in 0..dense.len() {
            prop_assert!((dense.probs[i] - sparse.prob(dense.outcome(i))).abs() <= TOL);
        }
    }

    #[test]
    fn single_precision_spectrum_tracks_double(pts in support(1, 64)) {
        let pts = first_coords(&pts);
        let a: Spectrum = qft_spectrum_dense(&pts, 1, 64, 2).unwrap();
        let b: Spectrum32 = qft_spectrum_dense(&pts, 1, 64, 2).unwrap();
        for (x, y) in a.probs.iter().zip(&b.probs) {
            prop_assert!((x - *y as f64).abs() <= 1e-5);
        }
    }

    #[test]
    fn preimage_matches_exhaustive_scan(d in prop::sample::select(vec![3u64, 6, 7, 13, 19]), v in 0i64..1024) {
        let field = make_field(d).unwrap();
        let f = UnitFunction::new(principal_cycle(&field, 96).unwrap(), 16);
        let params = ExperimentParams::new(1, 16, 1 << 10, 3, 96).unwrap();
        let label = f.label(&[v]);
        let fast = collapse_label(&f, &params, label);
        let slow = exhaustive_preimage(&f, params.q, &label).unwrap();
        prop_assert_eq!(&fast.points, &slow.points);
        prop_assert!(fast.points.contains(&v));
        prop_assert!(fast.max_offset() <= 0.5 + 1e-9);
    }

    #[test]
    fn ideal_power_preimage_matches_exhaustive_scan(a in 0i64..64, v in 0i64..64) {
        let field = make_field(10).unwrap();
        let g = IdealPowerFunction::new(&field, &quadinfra::ideals::ReducedIdeal { p: 1, q: 3 }, 4, 96).unwrap();
        let label = g.label(&[a, v]);
        let slow = exhaustive_preimage(&g, 64, &label).unwrap();
        prop_assert_eq!(g.preimage(&label, 64), slow.points);
    }

    #[test]
    fn accepted_outcomes_lie_strictly_inside_bound(c in -3000i64..3000, beta in 0.0f64..40.0) {
        let params = ExperimentParams::new(1, 64, 1 << 10, 3, 96).unwrap();
        let inside = (centered(c, params.qk()).abs() as f64) < accept_bound(params.q, beta);
        prop_assert_eq!(accept(&[c], &params, beta), inside);
    }

    #[test]
    fn rank_one_recovery_from_noisy_multiples(g in 0.05f64..0.4, seed in 0u64..500) {
        let qk = 3u64 << 12;
        let eta = 1.0 / (2 * qk) as f64;
        let mut rng = trial_rng(seed, 0);
        let samples: Vec<Vec<f64>> = (0..12)
            .map(|_| {
                let j = rng.gen_range(-6i64..=6) as f64;
                vec![j * g + rng.gen_range(-eta..eta)]
            })
            .collect();
        prop_assume!(samples.iter().any(|s| s[0].abs() > 10.0 * eta));
        let params = RecoveryParams { noise: eta, rank: 1, bound: None, precision: 96 };
        let got = recover_basis(&samples, &params).unwrap();
        let base = got.column(0)[0].abs();
        // Only multiples that occurred are visible; the recovered generator divides them.
        let ratio = g / base;
        prop_assert!(base <= g + 3.0 * eta * 6.0);
        prop_assert!((ratio - ratio.round()).abs() * base <= 3.0 * eta * 6.0);
    }

    #[test]
    fn generic_lattice_ops_agree_across_scalars(a in 0.5f64..3.0, b in -1.0f64..1.0, c in 0.5f64..3.0) {
        let l64: Lattice = RealLattice::new(vec![vec![a, 0.0], vec![b, c]], 96).unwrap();
        let l32: Lattice32 = RealLattice::new(vec![vec![a as f32, 0.0], vec![b as f32, c as f32]], 96).unwrap();
        let d64 = dual_basis(&l64).unwrap();
        let d32 = dual_basis(&l32).unwrap();
        prop_assert!((d64.det() - d32.det() as f64).abs() <= 1e-4 * d64.det().abs().max(1.0));
        prop_assert!(same_lattice(&dual_basis(&d64).unwrap(), &l64, 1e-9));
        let u = [a * 3.3, c * -2.7];
        let r = reduce_mod(&l64, &u).unwrap();
        prop_assert_eq!(reduce_mod(&l64, &r).unwrap(), r);
    }
}

#[test]
fn reduce_mod_rank_one_example() {
    let r = cf_regulator(13, 96).unwrap().to_f64();
    let l = RealLattice::new(vec![vec![r]], 96).unwrap();
    let got = reduce_mod(&l, &[0.93 + 3.0 * r]).unwrap();
    assert!((got[0] - 0.93).abs() < 1e-12);
}

#[test]
fn primal_from_dual_rank_one_example() {
    let r = cf_regulator(2, 96).unwrap().to_f64();
    let dual = RealLattice::new(vec![vec![1.0 / (64.0 * r)]], 96).unwrap();
    let l = primal_from_dual(&dual, 64).unwrap();
    assert!((l.column(0)[0] - 0.881374).abs() < 1e-6);
}

#[test]
fn planted_dual_round_trips_to_planted_lattice() {
    let planted = RealLattice::new(vec![vec![0.9, 0.2], vec![0.3, 1.2]], 96).unwrap();
    let oracle = make_synthetic(&planted, 8, 2, 64).unwrap();
    let dual = dual_basis(oracle.scaled_lattice()).unwrap();
    let back = primal_from_dual(&dual, 8).unwrap();
    assert!(same_lattice(&back, &planted, 1e-9));
    assert!((back.det().abs() - planted.det().abs()).abs() < 1e-12);
}

#[test]
fn verify_generator_rejects_half_period_shift() {
    let field = make_field(13).unwrap();
    let cycle = principal_cycle(&field, 96).unwrap();
    let i = cycle.position(&quadinfra::ideals::ReducedIdeal { p: 1, q: 3 }).unwrap();
    let wp = working_precision(96);
    let delta = cycle.distance(i).clone();
    assert!(verify_generator(&delta, &cycle.ideal(i), &cycle));
    let half = Float::with_val(wp, cycle.regulator() / 2u32);
    assert!(!verify_generator(&Float::with_val(wp, &delta + &half), &cycle.ideal(i), &cycle));
}

#[test]
fn bucket_sampling_matches_exact_spectrum() {
    // Λ = 8ℤ in ℤ_64 with residues {−1, 0, 1} merged into label 0.
    let l = RealLattice::new(vec![vec![8.0]], 96).unwrap();
    let oracle = make_synthetic(&l, 1, 3, 64).unwrap();
    let st = exhaustive_preimage(&oracle, 64, &vec![0]).unwrap();
    let spec: Spectrum = qft_spectrum_dense(&st.points, 1, 64, 1).unwrap();
    assert!((spec.prob(&[0]) - 0.375).abs() < 1e-12);
    assert!((spec.prob(&[8]) - 0.2428).abs() < 1e-4);
    let draws = 20_000;
    let mut rng = trial_rng(11, 0);
    let mut counts: BTreeMap<i64, usize> = BTreeMap::new();
    for _ in 0..draws {
        *counts.entry(sample_outcome(&spec, &mut rng)[0]).or_default() += 1;
    }
    assert!(counts.keys().all(|c| c % 8 == 0));
    for (c, n) in counts {
        let p = spec.prob(&[c]);
        let sigma = (draws as f64 * p * (1.0 - p)).sqrt();
        assert!((n as f64 - draws as f64 * p).abs() <= 3.0 * sigma.max(1.0), "c={c}");
    }
}

#[test]
fn synthetic_planted_rank_one_samples_round_to_dual() {
    // NΛ = 8ℤ divides q and k = 1 adds no zero-fill sidelobes, so every outcome is a dual point.
    let l = RealLattice::new(vec![vec![1.0]], 96).unwrap();
    let oracle = make_synthetic(&l, 8, 1, 1 << 10).unwrap();
    let params = ExperimentParams::new(1, 8, 1 << 10, 1, 96).unwrap();
    let dual = dual_basis(oracle.scaled_lattice()).unwrap();
    let run = quadinfra::unitgroup::sample_trials(&oracle, &params, &quadinfra::unitgroup::RunConfig::new(200, 2));
    let mut seen = 0;
    for c in run.accepted() {
        let x = dual_candidate(c, &params);
        let r = reduce_mod(&dual, &x).unwrap();
        assert!(r[0].abs() <= params.eta() * (1.0 + 1e-9), "{c:?}");
        seen += 1;
    }
    assert!(seen > 0);
}
