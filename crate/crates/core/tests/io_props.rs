mod common;

use influence_market::equilibrium::{verify_candidate, EquilibriumCandidate};
use influence_market::io::{
    emit_instance, emit_report, parse_instance, parse_report, InstanceDocument, MarketInstance,
    Report, ReportFormat,
};
use influence_market::market::PriceVector;
use influence_market::rational::q;
use influence_market::reduction::{build_linear_market, gen_sparse_game, ReductionParams};
use influence_market::io::RoleAnnotation;
use proptest::prelude::*;
use rand::Rng;

use common::{random_dense, random_market, rng};

fn round_trip(doc: &InstanceDocument) -> Result<(), TestCaseError> {
    let text = emit_instance(doc);
    prop_assert_eq!(&text, &emit_instance(doc));
    let back = parse_instance(&text).unwrap();
    prop_assert_eq!(&back, doc);
    prop_assert_eq!(emit_instance(&back), text);
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn markets_and_candidates_round_trip(seed in any::<u64>()) {
        let mut r = rng(seed);
        let (m, h) = (r.gen_range(1..=3), r.gen_range(1..=3));
        let market = random_market(&mut r, m, h);
        let cand = EquilibriumCandidate::new(
            PriceVector::raw((0..h).map(|_| q(r.gen_range(0..=9), r.gen_range(1..=7))).collect()),
            market.profile_from_dense(&random_dense(&mut r, m, h, 9, 7)),
        );
        round_trip(&InstanceDocument::Candidate(cand.clone()))?;
        let report = verify_candidate(&market, &cand, &q(1, 3)).unwrap();
        round_trip(&InstanceDocument::Market(MarketInstance::new(market)))?;
        let report = Report::Verification(report);
        round_trip(&InstanceDocument::Report(report.clone()))?;
        let lines = emit_report(&report, ReportFormat::Lines);
        prop_assert_eq!(parse_report(&lines).unwrap().passed(), report.passed());
    }

    #[test]
    fn games_and_built_markets_round_trip(seed in any::<u64>(), n in 3usize..=4) {
        let game = gen_sparse_game(n, seed).unwrap();
        round_trip(&InstanceDocument::Game(game.clone()))?;
        let (market, roles) = build_linear_market(&game, &ReductionParams::defaults(n)).unwrap();
        round_trip(&InstanceDocument::Market(MarketInstance {
            market,
            roles: Some(RoleAnnotation::Game(roles)),
        }))?;
    }
}
