//! Every cargo example compiles as a module here and its `run` is checked.

macro_rules! example {
    ($name:ident, $file:literal) => {
        #[allow(dead_code)]
        #[path = $file]
        mod $name;
    };
}

example!(schur_complements, "../examples/schur_complements.rs");
example!(feedback_loop, "../examples/feedback_loop.rs");
example!(adiabatic_cavity, "../examples/adiabatic_cavity.rs");
example!(commutativity, "../examples/commutativity.rs");
example!(convergence, "../examples/convergence.rs");
example!(amplitude_damping, "../examples/amplitude_damping.rs");
example!(spec_files, "../examples/spec_files.rs");
example!(write_fixtures, "../examples/write_fixtures.rs");

#[test]
fn schur_complements_example() {
    let s = schur_complements::run();
    assert!(s.successive_gap < 1e-12);
    assert_eq!(s.generalized.matrix().shape(), (2, 2));
    assert!(matches!(s.refusal, itoreduce::Error::IllDefinedComplement { .. }));
}

#[test]
fn feedback_loop_example() {
    let (g, reduced) = feedback_loop::run();
    assert_eq!((g.channels(), reduced.channels()), (2, 1));
    assert!(itoreduce::generator::validate_hp(&reduced, 1e-9).passed);
}

#[test]
fn adiabatic_cavity_example() {
    let s = adiabatic_cavity::run();
    assert_eq!(s.reduced.dim(), 2);
    assert!((s.cavity_rate - s.predicted_rate).abs() < 1e-13);
}

#[test]
fn commutativity_example() {
    let s = commutativity::run();
    assert!(s.cavity.passed);
    assert!(s.random_worst < 1e-9);
}

#[test]
fn convergence_example() {
    let t = convergence::run();
    assert_eq!(t.is_monotone(), Some(true));
    assert!(t.rows.last().unwrap().error < 0.02);
}

#[test]
fn amplitude_damping_example() {
    for (t, p) in amplitude_damping::run() {
        assert!((p - (-t).exp()).abs() < 1e-12);
    }
}

#[test]
fn spec_files_example() {
    let (text, net) = spec_files::run();
    assert_eq!(itoreduce::spec_file::emit(&net), text);
}

#[test]
fn write_fixtures_example_matches_shipped_files() {
    let dir = tempfile::tempdir().unwrap();
    for name in write_fixtures::run(dir.path()).unwrap() {
        let fresh = std::fs::read(dir.path().join(&name)).unwrap();
        let shipped = std::fs::read(concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures/").to_string() + &name).unwrap();
        assert_eq!(fresh, shipped, "{name}");
    }
}
