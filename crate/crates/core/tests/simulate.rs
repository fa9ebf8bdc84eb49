use orderclust::kernel::sir::BetaPath;
use orderclust::orders::RandomOrder;
use orderclust::simulate::{doob_gillespie, simulate_ou_series, subsample_infections, EventKind};
use statrs::distribution::{ChiSquared, ContinuousCDF};

#[test]
fn ou_blocks_have_the_stated_moments() {
    let order = RandomOrder::new(40_000, vec![20_000, 40_000]).unwrap();
    let y = simulate_ou_series(&order, &[2.0, -1.0], &[0.5, 3.0], 0.6, 8).unwrap();
    for (r, (mu, eta)) in order.blocks().zip([(2.0, 0.5), (-1.0, 3.0)]) {
        let x = &y[r];
        let n = x.len() as f64;
        let mean = x.iter().sum::<f64>() / n;
        let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        let lag: f64 = x.windows(2).map(|w| (w[0] - mean) * (w[1] - mean)).sum::<f64>() / (n - 1.0) / var;
        assert!((mean - mu).abs() < 0.05, "{mean}");
        assert!((var / eta - 1.0).abs() < 0.05, "{var}");
        assert!((lag - 0.6).abs() < 0.03, "{lag}");
    }
}

#[test]
fn no_infections_without_transmission() {
    let path = BetaPath::constant(200, 0.0).unwrap();
    let xi = 0.25;
    let ep = doob_gillespie(&path, xi, 1000, 500, 3).unwrap();
    assert!(ep.infection_times.is_empty());
    assert!(ep.events.iter().all(|e| e.kind == EventKind::Recovery && e.s == 1000));
    // recoveries of 500 independent Exp(ξ) clocks: the mean of the last time is H_500 / ξ
    let last = ep.events.last().unwrap().time;
    let h: f64 = (1..=500).map(|k| 1.0 / k as f64).sum();
    assert!((last - h / xi).abs() < 5.0 * (std::f64::consts::PI.powi(2) / 6.0).sqrt() / xi);
}

#[test]
fn subsampling_is_uniform() {
    let times: Vec<f64> = (0..20).map(f64::from).collect();
    let reps = 5000;
    let mut hits = [0.0; 20];
    for s in 0..reps {
        for t in subsample_infections(&times, 0.2, s).unwrap() {
            hits[t as usize] += 1.0;
        }
    }
    let expected = reps as f64 * 4.0 / 20.0;
    let stat: f64 = hits.iter().map(|h| (h - expected).powi(2) / expected).sum();
    let crit = ChiSquared::new(19.0).unwrap().inverse_cdf(0.999);
    assert!(stat < crit, "chi-square {stat} vs {crit}");
}
