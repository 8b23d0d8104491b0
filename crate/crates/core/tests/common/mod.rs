#![allow(dead_code)]

use mmhp::{EventSequence64, Mat64, ModelParams64};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn reference_params() -> ModelParams64 {
    let q = Mat64::from_rows(&[vec![-1.0, 1.0], vec![1.0, -1.0]]).unwrap();
    ModelParams64::new(vec![1.0, 1.0], vec![1.0, 4.0], vec![2.0, 10.0], q, vec![0.5, 0.5], 0.1).unwrap()
}

pub fn random_params(m: usize, delta: f64, rng: &mut ChaCha8Rng) -> ModelParams64 {
    let mut q = Mat64::zeros(m);
    for i in 0..m {
        let mut s = 0.0;
        for j in 0..m {
            if i != j {
                q[(i, j)] = rng.gen_range(0.1..2.0);
                s += q[(i, j)];
            }
        }
        q[(i, i)] = -s;
    }
    let mut xi0: Vec<f64> = (0..m).map(|_| rng.gen_range(0.1..1.0)).collect();
    let tot: f64 = xi0.iter().sum();
    xi0.iter_mut().for_each(|x| *x /= tot);
    let mu: Vec<f64> = (0..m).map(|_| rng.gen_range(0.3..2.0)).collect();
    let beta: Vec<f64> = (0..m).map(|_| rng.gen_range(1.0..8.0)).collect();
    // α < β keeps every regime stationary.
    let alpha: Vec<f64> = beta.iter().map(|b| rng.gen_range(0.0..0.7) * b).collect();
    ModelParams64::new(
        mu,
        alpha,
        beta,
        q,
        xi0,
        delta,
    )
    .unwrap()
}

pub fn random_events(k: usize, max_gap: f64, rng: &mut ChaCha8Rng) -> EventSequence64 {
    let mut t = 0.0;
    EventSequence64::from_times(
        (0..k)
            .map(|_| {
                t += rng.gen_range(0.01 * max_gap..max_gap);
                t
            })
            .collect(),
    )
    .unwrap()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
