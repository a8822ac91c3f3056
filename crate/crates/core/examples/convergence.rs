//! Compare the slow dynamics of the qubit-cavity model at growing coupling
//! with the dynamics of its adiabatically reduced generator.

use itoreduce::dynamics::{convergence_study, ConvergenceTable, DensityMatrix};
use itoreduce::fixtures::fast_cavity;

pub fn run() -> ConvergenceTable {
    let fam = fast_cavity();
    // start in the excited slow state |e, 0>
    let rho0 = DensityMatrix::basis_state(2, 1).unwrap();
    convergence_study(&fam, &rho0, 1.0, &[2.0, 4.0, 8.0, 16.0, 32.0]).unwrap()
}

fn main() {
    let table = run();
    println!("{:>6}  {:>12}  {:>6}", "k", "error", "ratio");
    let ratios = table.ratios();
    for (i, row) in table.rows.iter().enumerate() {
        let ratio = i
            .checked_sub(1)
            .and_then(|j| ratios[j])
            .map_or(String::from("-"), |r| format!("{r:.2}"));
        println!("{:>6}  {:>12.4e}  {:>6}", row.k, row.error, ratio);
    }
    println!("monotone: {:?}", table.is_monotone());
}
