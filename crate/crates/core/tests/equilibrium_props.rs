mod common;

use influence_market::equilibrium::{
    fixed_point_residual, phi_constants, phi_step, verify_candidate, EquilibriumCandidate,
    PhiPoint,
};
use influence_market::market::{
    LinearInfluenceUtility, Market, PriceVector, Trader, Utility,
};
use influence_market::rational::{one, q, qi, sum};
use influence_market::Q;
use proptest::prelude::*;
use rand::Rng;

use common::{bundle_oracle_case, grid_q, random_dense, random_market, rng};

/// Random positive price vector summing to one.
fn random_prices(r: &mut impl Rng, h: usize) -> Vec<Q> {
    let raw: Vec<Q> = (0..h).map(|_| grid_q(r, 1, 8, 1)).collect();
    let total = sum(&raw);
    raw.into_iter().map(|p| p / &total).collect()
}

/// `m` traders in a ring over `m` goods: trader `k` owns `amount` of good
/// `k` and mostly wants good `k + 1`.
fn ring_market(r: &mut impl Rng, m: usize, amount: &Q) -> Market {
    let traders = (0..m)
        .map(|k| {
            let mut w = vec![qi(0); m];
            w[k] = amount.clone();
            let mut c: Vec<Q> = (0..m).map(|_| grid_q(r, 0, 2, 8)).collect();
            c[(k + 1) % m] = grid_q(r, 3, 8, 8);
            Trader::new(
                format!("T{}", k + 1),
                w,
                Utility::Linear(LinearInfluenceUtility::plain(c)),
            )
        })
        .collect();
    Market::new(m, traders).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn optimal_bundle_beats_the_grid(seed in any::<u64>()) {
        prop_assert!(bundle_oracle_case(seed).is_ok(), "{:?}", bundle_oracle_case(seed));
    }

    #[test]
    fn verdicts_are_monotone_in_epsilon(seed in any::<u64>()) {
        let mut r = rng(seed);
        let (m, h) = (r.gen_range(1..=3), r.gen_range(1..=3));
        let market = random_market(&mut r, m, h);
        let cand = EquilibriumCandidate::new(
            PriceVector::normalized(random_prices(&mut r, h)).unwrap(),
            market.profile_from_dense(&random_dense(&mut r, m, h, 6, 4)),
        );
        let mut passed = [false; 4];
        for eps in (0..=12).map(|e| q(e, 4)) {
            let report = verify_candidate(&market, &cand, &eps).unwrap();
            for (c, was) in report.conditions.iter().zip(passed.iter_mut()) {
                prop_assert!(c.passed || !*was, "condition {} regressed at {}", c.condition, eps);
                *was = c.passed;
            }
        }
    }

    #[test]
    fn phi_step_stays_in_the_domain(seed in any::<u64>()) {
        let mut r = rng(seed);
        let (m, h) = (r.gen_range(1..=3), r.gen_range(1..=3));
        let market = random_market(&mut r, m, h);
        let consts = phi_constants(&market).unwrap();
        let slack = one() - qi(h as i64) * &consts.floor;
        let prices = random_prices(&mut r, h)
            .into_iter()
            .map(|p| &consts.floor + p * &slack)
            .collect();
        let point = PhiPoint {
            allocations: random_dense(&mut r, m, h, 11, 10),
            prices,
        };
        prop_assert!(point.check_domain(&market, &consts).is_ok());
        let image = phi_step(&market, &point, &consts).unwrap();
        prop_assert!(image.check_domain(&market, &consts).is_ok());
    }

    #[test]
    fn residual_zero_points_are_approximate_equilibria(
        seed in any::<u64>(),
        m in 2usize..=3,
        amount in 4i64..=8,
    ) {
        let mut r = rng(seed);
        let amount = q(amount, 8);
        let market = ring_market(&mut r, m, &amount);
        let consts = phi_constants(&market).unwrap();
        let mut allocations = vec![vec![qi(0); m]; m];
        for (k, x) in allocations.iter_mut().enumerate() {
            x[(k + 1) % m] = amount.clone();
        }
        let point = PhiPoint { allocations, prices: vec![q(1, m as i64); m] };
        prop_assert_eq!(fixed_point_residual(&market, &point, &consts).unwrap(), qi(0));
        let eps = qi(m as i64) * &consts.floor;
        let report = verify_candidate(&market, &point.to_candidate(&market), &eps).unwrap();
        prop_assert!(report.verdict, "{:?}", report);
    }
}
