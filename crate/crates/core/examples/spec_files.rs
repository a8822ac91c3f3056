//! Write a network as a spec file, read it back, and validate it the way the
//! command line does.

use itoreduce::fixtures::{sigma_minus, sigma_z};
use itoreduce::generator::{from_slh, validate_hp, ChannelRole};
use itoreduce::spec_file::{emit, parse, Network};
use itoreduce::{ComplexMatrix, SlhTriple, C64};

pub fn run() -> (String, Network) {
    let triple = SlhTriple::new(
        ComplexMatrix::identity(2, 2) * C64::from_polar(1.0, 0.4),
        vec![sigma_minus() * C64::new(0.8, 0.0)],
        sigma_z() * C64::new(0.5, 0.0),
    )
    .unwrap();
    let text = emit(&Network::Slh(triple, vec![ChannelRole::External]));
    let net = parse(&text).unwrap();
    (text, net)
}

fn main() {
    let (text, net) = run();
    println!("{text}");
    if let Network::Slh(t, _) = &net {
        let g = from_slh(t).unwrap();
        println!("as a generator: HP conditions {}", if validate_hp(&g, 1e-12).passed { "hold" } else { "fail" });
        println!("re-emitted identically: {}", emit(&net) == text);
    }
}
