#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::Command;

pub fn crate_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
}

pub fn fixture(name: &str) -> PathBuf {
    crate_dir().join("fixtures").join(name)
}

pub fn golden_dir() -> PathBuf {
    crate_dir().join("fixtures").join("golden")
}

pub struct Output {
    pub code: i32,
    pub stdout: String,
    pub stderr: String,
}

/// Run the built binary with a clean tolerance environment.
pub fn itoreduce(args: &[&str]) -> Output {
    itoreduce_env(args, &[])
}

pub fn itoreduce_env(args: &[&str], env: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_itoreduce"));
    cmd.args(args).env_remove("ITOREDUCE_TOL");
    for (k, v) in env {
        cmd.env(k, v);
    }
    let out = cmd.output().expect("binary runs");
    Output {
        code: out.status.code().expect("exit code"),
        stdout: String::from_utf8(out.stdout).expect("utf-8 stdout"),
        stderr: String::from_utf8(out.stderr).expect("utf-8 stderr"),
    }
}

/// A fixture command whose report, and reduced generator when `writes_out`,
/// are frozen under `fixtures/golden`.
pub struct GoldenCase {
    pub name: &'static str,
    pub command: &'static str,
    pub input: &'static str,
    pub extra: &'static [&'static str],
    pub writes_out: bool,
    pub code: i32,
}

pub const GOLDEN_CASES: &[GoldenCase] = &[
    GoldenCase { name: "validate_trivial", command: "validate", input: "trivial.json", extra: &[], writes_out: false, code: 0 },
    GoldenCase { name: "validate_amplitude_damping_slh", command: "validate", input: "amplitude_damping_slh.json", extra: &[], writes_out: false, code: 0 },
    GoldenCase { name: "validate_flipped_m_sign", command: "validate", input: "flipped_m_sign.json", extra: &[], writes_out: false, code: 2 },
    GoldenCase { name: "validate_fast_cavity", command: "validate", input: "fast_cavity.json", extra: &[], writes_out: false, code: 0 },
    GoldenCase { name: "validate_fast_violation", command: "validate", input: "fast_violation.json", extra: &[], writes_out: false, code: 2 },
    GoldenCase { name: "feedback_swap_scattering", command: "feedback", input: "swap_scattering.json", extra: &[], writes_out: true, code: 0 },
    GoldenCase { name: "feedback_cavity_loop", command: "feedback", input: "cavity_loop.json", extra: &[], writes_out: true, code: 0 },
    GoldenCase { name: "feedback_identity_loop", command: "feedback", input: "identity_loop.json", extra: &[], writes_out: false, code: 3 },
    GoldenCase { name: "adiabatic_fast_cavity", command: "adiabatic", input: "fast_cavity.json", extra: &[], writes_out: true, code: 0 },
    GoldenCase { name: "adiabatic_decoupled_family", command: "adiabatic", input: "decoupled_family.json", extra: &[], writes_out: true, code: 0 },
    GoldenCase { name: "adiabatic_fast_violation", command: "adiabatic", input: "fast_violation.json", extra: &[], writes_out: false, code: 4 },
    GoldenCase { name: "commute_fast_cavity_loop", command: "commute", input: "fast_cavity_loop.json", extra: &[], writes_out: false, code: 0 },
    GoldenCase { name: "commute_decoupled_family", command: "commute", input: "decoupled_family.json", extra: &[], writes_out: false, code: 0 },
    GoldenCase { name: "commute_closed_loop_singular", command: "commute", input: "closed_loop_singular.json", extra: &[], writes_out: false, code: 4 },
    GoldenCase { name: "converge_fast_cavity", command: "converge", input: "fast_cavity.json", extra: &[], writes_out: false, code: 0 },
    GoldenCase { name: "converge_decoupled_family", command: "converge", input: "decoupled_family.json", extra: &["--k", "1,10,100"], writes_out: false, code: 0 },
];

/// Run every golden case into `scratch` and compare with the committed files,
/// or overwrite them when `BLESS` is set. Returns one message per mismatch.
pub fn check_goldens(scratch: &Path) -> Vec<String> {
    let bless = std::env::var_os("BLESS").is_some();
    let mut problems = Vec::new();
    for case in GOLDEN_CASES {
        let input = fixture(case.input);
        let report = scratch.join(format!("{}.json", case.name));
        let out = scratch.join(format!("{}.out.json", case.name));
        let mut args = vec![
            case.command.to_string(),
            input.to_string_lossy().into_owned(),
            "--no-timestamp".into(),
            "--report".into(),
            report.to_string_lossy().into_owned(),
        ];
        if case.writes_out {
            args.push("--out".into());
            args.push(out.to_string_lossy().into_owned());
        }
        args.extend(case.extra.iter().map(|s| s.to_string()));
        let argv: Vec<&str> = args.iter().map(String::as_str).collect();
        let run = itoreduce(&argv);
        if run.code != case.code {
            problems.push(format!("{}: exit {} (expected {}): {}", case.name, run.code, case.code, run.stderr));
            continue;
        }
        let mut produced = vec![(report, golden_dir().join(format!("{}.json", case.name)))];
        if case.writes_out {
            produced.push((out, golden_dir().join(format!("{}.out.json", case.name))));
        }
        for (got, want) in produced {
            let got_bytes = match std::fs::read(&got) {
                Ok(b) => b,
                Err(e) => {
                    problems.push(format!("{}: {} not written: {e}", case.name, got.display()));
                    continue;
                }
            };
            if bless {
                std::fs::write(&want, &got_bytes).expect("write golden");
                continue;
            }
            match std::fs::read(&want) {
                Ok(w) if w == got_bytes => {}
                Ok(_) => problems.push(format!("{}: {} differs from golden", case.name, want.display())),
                Err(e) => problems.push(format!("{}: missing golden {}: {e}", case.name, want.display())),
            }
        }
    }
    problems
}
