//! Close the internal port of a two-mirror cavity whose second output is fed
//! back into the first input through a beam splitter.

use itoreduce::fixtures::cavity_loop;
use itoreduce::generator::validate_hp;
use itoreduce::reduce::feedback_eliminate;
use itoreduce::ItoGeneratorMatrix;

pub fn run() -> (ItoGeneratorMatrix, ItoGeneratorMatrix) {
    let g = cavity_loop();
    let reduced = feedback_eliminate(&g).expect("the loop is well posed");
    (g, reduced)
}

fn main() {
    let (g, reduced) = run();
    println!("network: d = {}, {} channels ({} internal)", g.dim(), g.channels(), g.internal_channels().len());
    println!("closed loop: d = {}, {} channel", reduced.dim(), reduced.channels());
    println!("K ={}", reduced.k());
    println!("L ={}", reduced.l());
    println!("N ={}", reduced.scattering());
    println!("effective Hamiltonian ={}", reduced.hamiltonian());
    println!("HP conditions: {}", if validate_hp(&reduced, 1e-9).passed { "hold" } else { "violated" });
}
