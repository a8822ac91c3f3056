//! Excited-state decay of a damped qubit, from its generator matrix to the
//! master equation.

use itoreduce::dynamics::{lindblad_generator, propagate, DensityMatrix};
use itoreduce::fixtures::amplitude_damping;

/// `(t, excited population)` on a grid of times.
pub fn run() -> Vec<(f64, f64)> {
    let sop = lindblad_generator(&amplitude_damping(1.0)).unwrap();
    let excited = DensityMatrix::basis_state(2, 1).unwrap();
    (0..=8)
        .map(|i| {
            let t = 0.25 * i as f64;
            (t, propagate(&sop, &excited, t).unwrap().population(1))
        })
        .collect()
}

fn main() {
    println!("{:>5}  {:>18}  {:>18}", "t", "population", "exp(-t)");
    for (t, p) in run() {
        println!("{t:>5.2}  {p:>18.15}  {:>18.15}", (-t).exp());
    }
}
