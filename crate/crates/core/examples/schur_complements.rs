//! Labeled block matrices: ordinary, successive and generalized Schur
//! complements, and the refusal of an ill-defined generalized complement.

use itoreduce::blockmat::BlockOperatorMatrix;
use itoreduce::random::{random_three_block, rank_deficient_instance};
use itoreduce::reduce::relative_deviation;
use itoreduce::Error;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub struct Summary {
    /// Largest relative gap between eliminating `{a, b}` at once and in
    /// either order.
    pub successive_gap: f64,
    /// The generalized complement of a compatible rank-deficient pivot.
    pub generalized: BlockOperatorMatrix,
    /// The error returned for an incompatible one.
    pub refusal: Error,
}

pub fn run() -> Summary {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let x = random_three_block(&mut rng, [2, 3, 2]);
    let joint = x.schur_complement(&["a", "b"]).unwrap();
    let successive_gap = [(["a"], ["b"]), (["b"], ["a"])]
        .iter()
        .map(|(first, second)| {
            let staged = x.successive_schur(first, second).unwrap();
            relative_deviation(staged.matrix(), joint.matrix())
        })
        .fold(0.0, f64::max);

    let compatible = rank_deficient_instance(&mut rng, 2, 4, 2, true);
    let generalized = compatible.generalized_schur_complement(&["pivot"], None).unwrap();
    let incompatible = rank_deficient_instance(&mut rng, 2, 4, 2, false);
    let refusal = incompatible.generalized_schur_complement(&["pivot"], None).unwrap_err();
    Summary {
        successive_gap,
        generalized,
        refusal,
    }
}

fn main() {
    let s = run();
    println!("one-shot vs successive complements: {:.2e}", s.successive_gap);
    println!("generalized complement over a rank-2 pivot:{}", s.generalized.matrix());
    println!("incompatible pivot: {}", s.refusal);
}
