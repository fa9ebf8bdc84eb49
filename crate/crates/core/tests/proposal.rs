mod common;

use std::collections::HashMap;

use orderclust::kernel::ou::OuHyperparams;
use orderclust::kernel::Evaluator;
use orderclust::numeric::log_sum_exp;
use orderclust::orders::enumerate_orders;
use orderclust::proposal::{
    estimate_log_norm_constant, exact_log_norm_constant, exact_norm_constants, BlockRecursion,
    NormConstants, Proposal, ProposalConfig,
};
use orderclust::rng;

use common::*;

fn short_values() -> Vec<Vec<f64>> {
    vec![
        vec![0.2, 0.1, -0.3, 1.8, 2.1, 1.7, 2.4, 0.3],
        vec![-0.4, 0.0, 0.5, 1.9, 1.5, 2.2, 0.1, -0.2],
    ]
}

#[test]
fn block_recursion_total_matches_enumeration() {
    let (k, d) = ou_dataset(short_values(), OuHyperparams::default());
    let eval = Evaluator::new(k, d, 1);
    assert!(eval.factorizes());
    let nc = exact_norm_constants(&eval).unwrap();
    for i in 0..2 {
        let enumerated = exact_log_norm_constant(|o| eval.log_lik(i, o), 8).unwrap();
        assert!((nc.entries[i].log_z - enumerated).abs() < 1e-9);
    }
}

#[test]
fn block_recursion_draws_follow_the_order_posterior() {
    let t = 6;
    let y = &short_values()[0][..t];
    let (k6, d6) = ou_dataset(vec![y.to_vec()], OuHyperparams::default());
    let e6 = Evaluator::new(k6, d6, 1);
    let block = |s: usize, e: usize| e6.block_log_lik(0, s..e).unwrap();
    let rec = BlockRecursion::new(t, block);
    let orders = enumerate_orders(t).unwrap();
    let lls: Vec<f64> = orders.iter().map(|o| e6.log_lik(0, o)).collect();
    let z = log_sum_exp(&lls);
    assert!((rec.log_total() - z).abs() < 1e-9);
    let mut rng = rng::rng_from(5);
    let n = 100_000;
    let mut counts = HashMap::new();
    for _ in 0..n {
        *counts.entry(rec.sample(block, &mut rng)).or_insert(0usize) += 1;
    }
    for (o, ll) in orders.iter().zip(&lls) {
        let p = (ll - z).exp();
        let f = *counts.get(o).unwrap_or(&0) as f64 / n as f64;
        let se = (p * (1.0 - p) / n as f64).sqrt();
        assert!((f - p).abs() < 5.0 * se + 1e-4, "{o}: {f} vs {p}");
    }
}

#[test]
fn importance_estimate_is_within_five_percent_for_most_seeds() {
    let (k, d) = ou_dataset(short_values(), OuHyperparams::default());
    let eval = Evaluator::new(k, d, 1);
    let exact = exact_log_norm_constant(|o| eval.log_lik(0, o), 8).unwrap();
    let close = (0..20)
        .filter(|&s| {
            let est = estimate_log_norm_constant(|o| eval.log_lik(0, o), 8, 20_000, 0.5, s).unwrap();
            ((est - exact).exp() - 1.0).abs() < 0.05
        })
        .count();
    assert!(close >= 19, "{close} of 20 seeds within 5%");
}

#[test]
fn warm_started_components_resume_from_saved_states() {
    let (k, d) = ou_dataset(short_values(), OuHyperparams::default());
    let eval = Evaluator::new(k.clone(), d.clone(), 1);
    let nc: NormConstants = exact_norm_constants(&eval).unwrap();
    let cfg = ProposalConfig {
        depth: 2,
        warm_start: true,
        ..Default::default()
    };
    let a = Proposal::new(Evaluator::new(k.clone(), d.clone(), 1), &nc, cfg).unwrap();
    let mut r = rng::rng_from(3);
    for _ in 0..10 {
        a.sample(&mut r);
    }
    let saved = a.warm_states().unwrap();
    let b = Proposal::new(Evaluator::new(k, d, 1), &nc, cfg).unwrap();
    b.restore_warm_states(&saved).unwrap();
    let mut ra = rng::rng_from(9);
    let mut rb = rng::rng_from(9);
    for _ in 0..20 {
        assert_eq!(a.sample(&mut ra), b.sample(&mut rb));
    }
}
