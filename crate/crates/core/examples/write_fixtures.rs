//! Regenerate the JSON fixture files shipped in `fixtures/`.
//!
//! ```text
//! cargo run --example write_fixtures -- [DIR]
//! ```

use std::path::Path;

use itoreduce::fixtures;
use itoreduce::generator::ChannelRole;
use itoreduce::spec_file::{emit, Network};
use itoreduce::{ComplexMatrix, SlhTriple};

/// Every fixture as `(file name, network)`.
pub fn all() -> Vec<(&'static str, Network)> {
    let damping_slh = SlhTriple::unscattered(vec![fixtures::sigma_minus()], ComplexMatrix::zeros(2, 2)).unwrap();
    vec![
        ("trivial.json", Network::Generator(fixtures::trivial())),
        ("swap_scattering.json", Network::Generator(fixtures::swap_scattering())),
        ("identity_loop.json", Network::Generator(fixtures::identity_loop())),
        ("amplitude_damping.json", Network::Generator(fixtures::amplitude_damping(1.0))),
        ("amplitude_damping_slh.json", Network::Slh(damping_slh, vec![ChannelRole::External])),
        ("cavity_loop.json", Network::Generator(fixtures::cavity_loop())),
        ("flipped_m_sign.json", Network::Generator(fixtures::flipped_m_sign())),
        ("fast_cavity.json", Network::ScaledFamily(fixtures::fast_cavity())),
        ("fast_cavity_loop.json", Network::ScaledFamily(fixtures::fast_cavity_loop())),
        ("decoupled_family.json", Network::ScaledFamily(fixtures::decoupled_family())),
        ("fast_violation.json", Network::ScaledFamily(fixtures::fast_violation())),
        ("closed_loop_singular.json", Network::ScaledFamily(fixtures::closed_loop_singular_family())),
    ]
}

pub fn run(dir: &Path) -> std::io::Result<Vec<String>> {
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    for (name, net) in all() {
        std::fs::write(dir.join(name), emit(&net))?;
        written.push(name.to_string());
    }
    std::fs::write(dir.join("malformed.json"), "{ \"schema_version\": \"1\", \"kind\": \"generator\", \"dims\": \n")?;
    written.push("malformed.json".into());
    Ok(written)
}

fn main() -> std::io::Result<()> {
    let dir = std::env::args()
        .nth(1)
        .unwrap_or_else(|| concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures").to_string());
    for name in run(Path::new(&dir))? {
        println!("{dir}/{name}");
    }
    Ok(())
}
