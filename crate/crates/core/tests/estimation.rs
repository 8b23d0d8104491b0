mod common;

use mmhp::em::{fit, fit_from, FitConfig};
use mmhp::gof::residuals;
use mmhp::inference::infer;
use mmhp::simulate::{simulate_mmhp_delta, Stop};
use mmhp::{Mat64, ModelParams64};

#[test]
fn em_from_a_simulated_sample() {
    let truth = common::reference_params();
    let sim = simulate_mmhp_delta(&truth, Stop::Events(600), 3).unwrap();
    let cfg = FitConfig { max_steps: 60, restarts: 1, ..FitConfig::new(0.1) };
    let res = fit(&sim.events, 2, &cfg).unwrap();
    for w in res.loglik_trace.windows(2) {
        assert!(w[1] >= w[0] - 1e-8, "{} -> {}", w[0], w[1]);
    }
    assert!(res.params.alpha[0] <= res.params.alpha[1]);
    let (_, inf) = infer(&res.params, &sim.events).unwrap();
    let total: f64 = inf.ed.iter().sum();
    assert!((total - sim.events.last_time()).abs() <= 1e-6 * sim.events.last_time());
    // The fit should describe its own data at least as well as the truth.
    let (_, at_truth) = infer(&truth, &sim.events).unwrap();
    assert!(res.loglik >= at_truth.loglik - 1.0);
    assert!(residuals(&res.params, &sim.events).unwrap().ks_pvalue > 0.01);
}

#[test]
fn mmpp_nesting_and_poisson_rate() {
    let truth = common::reference_params().without_excitation();
    let sim = simulate_mmhp_delta(&truth, Stop::Events(300), 9).unwrap();
    let cfg = FitConfig { max_steps: 40, restarts: 1, ..FitConfig::new(0.1) };
    let mmpp = fit(&sim.events, 2, &cfg.clone().mmpp()).unwrap();
    let pinned = fit(&sim.events, 2, &FitConfig { pin_alpha: Some(vec![0.0, 0.0]), ..cfg.clone() }).unwrap();
    assert!((mmpp.loglik - pinned.loglik).abs() < 1e-8, "{} vs {}", mmpp.loglik, pinned.loglik);

    let one = fit(&sim.events, 1, &cfg.mmpp()).unwrap();
    let rate = sim.events.len() as f64 / sim.events.last_time();
    assert!((one.params.mu[0] - rate).abs() <= 1e-6 * rate);
}

#[test]
fn starting_at_the_truth_does_not_lose_likelihood() {
    let mut rng = common::rng(40);
    let truth = common::random_params(2, 0.2, &mut rng);
    let sim = simulate_mmhp_delta(&truth, Stop::Horizon(200.0), 1).unwrap();
    let cfg = FitConfig { max_steps: 10, ..FitConfig::new(0.2) };
    let res = fit_from(&sim.events, &truth, &cfg).unwrap();
    assert!(res.loglik >= res.loglik_trace[0] - 1e-8);
}

#[test]
fn single_state_without_events_in_a_state_is_rejected() {
    let q = Mat64::from_rows(&[vec![-1.0, 1.0], vec![1.0, -1.0]]).unwrap();
    let p = ModelParams64::new(vec![1.0, 1.0], vec![0.0, 0.0], vec![1.0, 1.0], q, vec![0.5, 0.5], 0.1).unwrap();
    let one = mmhp::EventSequence64::from_times(vec![1.0]).unwrap();
    assert!(fit_from(&one, &p, &FitConfig::new(0.1)).is_err());
}
