//! SIR kernel checks against closed forms and independent integrators.

use orderclust::kernel::sir::{
    draw_betas, dsa_log_density, integrate_sir, sir_log_likelihood, sir_log_marginal,
    sir_mc_log_likelihoods, update_i0, BetaPath, DayLikelihood, EpiSeries, SirHyperparams,
};
use orderclust::orders::RandomOrder;
use orderclust::rng;

const XI: f64 = 0.125;

fn two_block_path() -> BetaPath {
    BetaPath::new(RandomOrder::new(40, vec![25, 40]).unwrap(), vec![0.45, 0.2]).unwrap()
}

#[test]
fn zero_infection_rate_is_pure_recovery() {
    let path = BetaPath::constant(20, 0.0).unwrap();
    let traj = integrate_sir(&path, XI, 0.01, 0.1).unwrap();
    for (k, t) in traj.times().enumerate() {
        assert_eq!(traj.s[k], 1.0);
        let exact = 0.01 * (-XI * t).exp();
        assert!((traj.i[k] - exact).abs() < 1e-9 * exact, "t = {t}");
    }
}

#[test]
fn conservation_on_every_grid() {
    let path = two_block_path();
    for step in [0.5, 0.25, 0.1, 0.05, 0.01] {
        let traj = integrate_sir(&path, XI, 0.002, step).unwrap();
        for k in 0..traj.s.len() {
            let total = traj.s[k] + traj.i[k] + traj.r[k];
            assert!((total - 1.002).abs() < 1e-10, "step {step}, index {k}");
        }
    }
}

#[test]
fn density_integrates_to_one() {
    let path = two_block_path();
    let traj = integrate_sir(&path, XI, 0.002, 0.01).unwrap();
    let spd = traj.steps_per_day;
    let h = traj.step();
    let mut integral = 0.0;
    // Simpson within each day; β may jump at day boundaries
    for day in 1..=path.t() {
        let base = (day - 1) * spd;
        let g = |k: usize| path.on_day(day) * traj.s[base + k] * traj.i[base + k];
        let mut acc = g(0) + g(spd);
        for k in 1..spd {
            acc += if k % 2 == 1 { 4.0 } else { 2.0 } * g(k);
        }
        integral += acc * h / 3.0;
    }
    let s_end = *traj.s.last().unwrap();
    assert!((integral / (1.0 - s_end) - 1.0).abs() < 1e-6, "{integral}");
}

#[test]
fn density_matches_finite_difference_of_susceptibles() {
    let path = two_block_path();
    let traj = integrate_sir(&path, XI, 0.002, 0.01).unwrap();
    let s_end = *traj.s.last().unwrap();
    let h = traj.step();
    for day in [3usize, 10, 24, 30, 39] {
        let k = day * traj.steps_per_day - 5;
        let t = k as f64 * h;
        let fd = -(traj.s[k + 1] - traj.s[k - 1]) / (2.0 * h) / (1.0 - s_end);
        let f = dsa_log_density(t, &traj, &path).unwrap().exp();
        assert!((fd - f).abs() < 1e-5 * f, "day {day}: {fd} vs {f}");
    }
}

#[test]
fn richardson_step_halving() {
    let path = two_block_path();
    let coarse = integrate_sir(&path, XI, 0.002, 0.1).unwrap();
    let fine = integrate_sir(&path, XI, 0.002, 0.05).unwrap();
    for day in 0..=path.t() {
        let (s1, i1, _) = coarse.at_day(day);
        let (s2, i2, _) = fine.at_day(day);
        assert!((s1 - s2).abs() < 1e-6 && (i1 - i2).abs() < 1e-6, "day {day}");
    }
}

/// Textbook RK4 on the three-compartment system, written independently.
fn oracle_day_states(by_day: &[f64], xi: f64, i0: f64, sub: usize) -> Vec<[f64; 3]> {
    let f = |b: f64, y: [f64; 3]| [-b * y[0] * y[1], b * y[0] * y[1] - xi * y[1], xi * y[1]];
    let h = 1.0 / sub as f64;
    let mut y = [1.0, i0, 0.0];
    let mut out = vec![y];
    for &b in by_day {
        for _ in 0..sub {
            let k1 = f(b, y);
            let y2: [f64; 3] = std::array::from_fn(|j| y[j] + 0.5 * h * k1[j]);
            let k2 = f(b, y2);
            let y3: [f64; 3] = std::array::from_fn(|j| y[j] + 0.5 * h * k2[j]);
            let k3 = f(b, y3);
            let y4: [f64; 3] = std::array::from_fn(|j| y[j] + h * k3[j]);
            let k4 = f(b, y4);
            y = std::array::from_fn(|j| y[j] + h / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]));
        }
        out.push(y);
    }
    out
}

#[test]
fn likelihood_matches_independent_integrator() {
    let order = RandomOrder::new(30, vec![12, 30]).unwrap();
    let betas = [0.5, 0.15];
    let path = BetaPath::new(order.clone(), betas.to_vec()).unwrap();
    let counts: Vec<u32> = (1..=30).map(|d| ((d * 7) % 5 + (d % 3)) as u32).collect();
    let series = EpiSeries::from_counts(counts.clone());
    let by_day: Vec<f64> = (1..=30).map(|d| if d <= 12 { 0.5 } else { 0.15 }).collect();
    let states = oracle_day_states(&by_day, XI, 0.003, 10);
    let s_end = states[30][0];
    let oracle: f64 = counts
        .iter()
        .enumerate()
        .map(|(d, &y)| {
            let [s, i, _] = states[d + 1];
            y as f64 * ((by_day[d] * s * i).ln() - (1.0 - s_end).ln())
        })
        .sum();
    let got = sir_log_likelihood(&series, &path, XI, 0.003, 0.1, DayLikelihood::Density).unwrap();
    assert!((got - oracle).abs() < 1e-9 * oracle.abs(), "{got} vs {oracle}");
}

#[test]
fn single_draw_marginal_is_the_likelihood_at_that_draw() {
    let order = RandomOrder::new(20, vec![8, 20]).unwrap();
    let series = EpiSeries::from_counts((0..20).map(|d| (d % 4) as u32).collect());
    let h = SirHyperparams {
        mc: 1,
        ..Default::default()
    };
    let betas = draw_betas(&h, &order, 77).remove(0);
    let path = BetaPath::new(order.clone(), betas).unwrap();
    let direct = sir_log_likelihood(&series, &path, h.xi, 0.01, h.ode_step, h.likelihood).unwrap();
    let mc = sir_log_marginal(&series, &order, &h, 0.01, 77).unwrap();
    assert!((direct - mc).abs() < 1e-12);
}

#[test]
fn monte_carlo_marginal_converges_to_quadrature() {
    // one block: the marginal is a one-dimensional integral over β
    let t = 15;
    let order = RandomOrder::one_block(t);
    let series = EpiSeries::from_counts(vec![0, 1, 0, 2, 1, 1, 3, 2, 2, 4, 3, 2, 5, 3, 4]);
    let h = SirHyperparams {
        mc: 20_000,
        ..Default::default()
    };
    let i0 = 0.01;
    let ll = |b: f64| {
        let path = BetaPath::constant(t, b).unwrap();
        sir_log_likelihood(&series, &path, h.xi, i0, h.ode_step, h.likelihood).unwrap()
    };
    let gamma_pdf = |b: f64| {
        let (k, r) = (h.beta_shape, h.beta_rate);
        (k * r.ln() + (k - 1.0) * b.ln() - r * b - orderclust::numeric::ln_gamma(k)).exp()
    };
    let n = 4000;
    let (lo, hi) = (1e-6, 3.0);
    let dx = (hi - lo) / n as f64;
    let mut integral = 0.0;
    for k in 0..=n {
        let b = lo + k as f64 * dx;
        let w = if k == 0 || k == n { 1.0 } else if k % 2 == 1 { 4.0 } else { 2.0 };
        integral += w * gamma_pdf(b) * ll(b).exp();
    }
    integral *= dx / 3.0;
    let draws = sir_mc_log_likelihoods(&series, &order, &h, i0, 5).unwrap();
    let shift = draws.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = draws.iter().map(|d| (d - shift).exp()).collect();
    let mean = w.iter().sum::<f64>() / w.len() as f64;
    let sd = (w.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (w.len() - 1) as f64).sqrt();
    let se = sd / (w.len() as f64).sqrt();
    let target = integral / shift.exp();
    assert!((mean - target).abs() < 4.0 * se, "{mean} vs {target} (se {se})");
}

#[test]
fn i0_update_with_flat_likelihood_samples_the_uniform_prior() {
    // an empty series has likelihood one, so the chain targets U(0, 1)
    let series = EpiSeries::from_counts(vec![0; 10]);
    let order = RandomOrder::one_block(10);
    let h = SirHyperparams {
        i0_proposal_sd: 1.5,
        mc: 1,
        ..Default::default()
    };
    let mut rng = rng::rng_from(3);
    let mut i0 = 0.5;
    let mut bins = [0usize; 3];
    let n = 60_000;
    for _ in 0..n {
        i0 = update_i0(&series, &order, &h, i0, 1, &mut rng).unwrap();
        bins[((i0 * 3.0) as usize).min(2)] += 1;
    }
    let expected = n as f64 / 3.0;
    // autocorrelated draws inflate the spread; a loose bound on relative frequency
    for b in bins {
        assert!((b as f64 - expected).abs() / expected < 0.05, "{bins:?}");
    }
}

#[test]
fn i0_update_with_tiny_step_stays_put() {
    let series = EpiSeries::from_counts((0..10).map(|d| d as u32).collect());
    let order = RandomOrder::one_block(10);
    let h = SirHyperparams {
        i0_proposal_sd: 1e-9,
        mc: 20,
        ..Default::default()
    };
    let mut rng = rng::rng_from(4);
    let mut i0 = 0.02;
    let mut accepted = 0;
    for _ in 0..50 {
        let next = update_i0(&series, &order, &h, i0, 1, &mut rng).unwrap();
        if next != i0 {
            accepted += 1;
        }
        assert!((next - 0.02).abs() < 1e-6);
        i0 = next;
    }
    assert!(accepted > 40);
}

#[test]
fn event_binning_uses_right_closed_days() {
    let s = EpiSeries::from_times(&[0.2, 1.0, 1.0001, 3.0], 3).unwrap();
    assert_eq!(s.counts(), &[2, 1, 1]);
    assert!(EpiSeries::from_times(&[3.5], 3).is_err());
    assert_eq!(EpiSeries::from_counts(vec![1, 0, 2]).to_day_times(), vec![1.0, 3.0, 3.0]);
}
