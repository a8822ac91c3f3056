//! Reduce the qubit-cavity network with an internal loop both ways round
//! and compare with eliminating everything at once.

use itoreduce::fixtures::fast_cavity_loop;
use itoreduce::random::{random_family, RandomFamilyConfig};
use itoreduce::reduce::check_commutativity;
use itoreduce::ReductionReport;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub struct Summary {
    pub cavity: ReductionReport,
    /// Largest pairwise deviation over a batch of random networks.
    pub random_worst: f64,
    pub random_count: usize,
}

pub fn run() -> Summary {
    let cavity = check_commutativity(&fast_cavity_loop(), 1e-9);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let random_count = 20;
    let random_worst = (0..random_count)
        .map(|_| {
            let r = check_commutativity(&random_family(&mut rng, &RandomFamilyConfig::default()), 1e-9);
            ["fa vs af", "fa vs one_shot", "af vs one_shot"]
                .iter()
                .map(|k| r.residual(k).unwrap_or(f64::INFINITY))
                .fold(0.0, f64::max)
        })
        .fold(0.0, f64::max);
    Summary {
        cavity,
        random_worst,
        random_count,
    }
}

fn main() {
    let s = run();
    println!("qubit-cavity network with an internal loop:");
    for (name, value) in &s.cavity.residuals {
        println!("  {name:<24} {value:.3e}");
    }
    println!("passed: {}", s.cavity.passed);
    println!("worst deviation over {} random networks: {:.3e}", s.random_count, s.random_worst);
}
