//! Eliminate a strongly damped cavity mode from a qubit-cavity model and
//! read off the enhanced qubit decay rate.

use itoreduce::fixtures::{fast_cavity, FastCavity};
use itoreduce::reduce::adiabatic_eliminate;
use itoreduce::ItoGeneratorMatrix;

pub struct Summary {
    pub reduced: ItoGeneratorMatrix,
    /// Decay rate into the cavity port, `|L_cav[e, g]|^2`.
    pub cavity_rate: f64,
    /// The same rate predicted by `4 g^2 kappa / (kappa^2 + 4 delta^2)`.
    pub predicted_rate: f64,
}

pub fn run() -> Summary {
    let p = FastCavity::default();
    let reduced = adiabatic_eliminate(&fast_cavity()).expect("preconditions hold");
    let cavity_rate = reduced.l_block(0)[(1, 0)].norm_sqr();
    let (g, kappa, delta) = (p.coupling, p.cavity_rates[0], p.detuning);
    Summary {
        reduced,
        cavity_rate,
        predicted_rate: 4.0 * g * g * kappa / (kappa * kappa + 4.0 * delta * delta),
    }
}

fn main() {
    let s = run();
    println!("qubit generator after eliminating the cavity:");
    println!("K ={}", s.reduced.k());
    println!("cavity-port coupling ={}", s.reduced.l_block(0));
    println!("rate into the cavity port: {:.12} (predicted {:.12})", s.cavity_rate, s.predicted_rate);
    println!("effective Hamiltonian ={}", s.reduced.hamiltonian());
}
