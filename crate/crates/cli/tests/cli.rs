use std::path::Path;
use std::process::{Command as Proc, Output};

use gpflow_cli::output::{to_json, RunDocument, SweepDocument, VerifyDocument};
use gpflow_cli::{execute, parse_args, CliError, Command, Document, Format};
use gpflow_core::{Init, Potential, SchemeKind, StepMode};

fn parse(args: &[&str]) -> Result<gpflow_cli::CliConfig, CliError> {
    parse_args(std::iter::once("gpflow").chain(args.iter().copied()))
}

fn usage_message(args: &[&str]) -> String {
    match parse(args) {
        Err(CliError::Usage(m)) => m,
        other => panic!("expected a usage error, got {other:?}"),
    }
}

fn bin(args: &[&str]) -> Output {
    Proc::new(env!("CARGO_BIN_EXE_gpflow"))
        .args(args)
        .env_remove("GPFLOW_THREADS")
        .output()
        .unwrap()
}

#[test]
fn run_flags_fill_defaults() {
    let cfg = parse(&["run", "--dim", "1", "--n", "127", "--beta", "0", "--scheme", "h1"]).unwrap();
    assert_eq!(cfg.command, Command::Run);
    assert_eq!(cfg.n, vec![127]);
    assert_eq!(cfg.bounds, vec![(0.0, 1.0)]);
    assert_eq!(cfg.potential, Potential::Zero);
    assert_eq!(cfg.run.scheme, SchemeKind::H1);
    assert_eq!(cfg.run.policy.mode, StepMode::Backtracking);
    assert_eq!(cfg.run.policy.alpha0, 0.5);
    assert_eq!(cfg.run.tol, 1e-9);
    assert_eq!(cfg.run.seed, 0);
    assert_eq!(cfg.run.init, Init::DefaultBump);
    assert_eq!(cfg.format, Format::Json);
    assert!(cfg.output.is_none());
    assert_eq!(cfg.plan().len(), 1);
}

#[test]
fn bogus_scheme_names_the_valid_ones() {
    let m = usage_message(&["run", "--scheme", "bogus"]);
    assert!(m.contains("h1") && m.contains("a0") && m.contains("au"), "{m}");
    assert!(!m.contains('\n'));
}

#[test]
fn sweep_alphas_give_three_runs() {
    let cfg = parse(&["sweep", "--alphas", "0.05,0.1,0.2"]).unwrap();
    let plan = cfg.plan();
    let alphas: Vec<f64> = plan.iter().map(|p| p.policy.alpha0).collect();
    assert_eq!(alphas, vec![0.05, 0.1, 0.2]);
    assert!(plan.iter().all(|p| p.policy.mode == StepMode::Fixed));
}

#[test]
fn inconsistent_combinations_are_rejected() {
    assert!(usage_message(&["sweep"]).contains("--alphas"));
    assert!(usage_message(&["run", "--alphas", "0.1"]).contains("sweep"));
    assert!(usage_message(&["run", "--trials", "3"]).contains("verify"));
    assert!(usage_message(&["run", "--dim", "2", "--n", "3,4,5"]).contains("--dim"));
    assert!(usage_message(&["run", "--dim", "4"]).contains("--dim"));
    assert!(usage_message(&["run", "--beta", "-1"]).contains("--beta"));
    assert!(usage_message(&["run", "--format", "xml"]).contains("json"));
    assert!(usage_message(&["run", "--shrink", "1.5"]).contains("shrink"));
    assert!(matches!(parse(&["run", "--frobnicate"]), Err(CliError::Clap(_))));
    assert!(matches!(parse(&["run", "--beta", "x"]), Err(CliError::Clap(_))));
}

#[test]
fn flags_override_file_values() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cfg.toml");
    std::fs::write(
        &path,
        "dim = 2\nn = [15, 17]\nbeta = 10.0\nscheme = \"a0\"\npotential = \"harmonic:20\"\nseed = 4\n",
    )
    .unwrap();
    let p = path.to_str().unwrap();
    let cfg = parse(&["run", "--config", p]).unwrap();
    assert_eq!((cfg.dim, cfg.n.clone(), cfg.beta), (2, vec![15, 17], 10.0));
    assert_eq!(cfg.run.scheme, SchemeKind::A0);
    assert_eq!(cfg.potential, Potential::Harmonic { omega: 20.0 });
    let cfg = parse(&["run", "--config", p, "--scheme", "au", "--n", "9", "--seed", "5"]).unwrap();
    assert_eq!(cfg.run.scheme, SchemeKind::Au);
    assert_eq!(cfg.n, vec![9, 9]);
    assert_eq!(cfg.beta, 10.0);
    assert_eq!(cfg.run.seed, 5);
}

#[test]
fn unknown_file_keys_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    std::fs::write(&path, "betta = 1.0\n").unwrap();
    let m = usage_message(&["run", "--config", path.to_str().unwrap()]);
    assert!(m.contains("betta"), "{m}");
}

#[test]
fn potential_file_is_read_in_node_order() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("v.csv");
    std::fs::write(&path, "0,1\n2, 3\n4\n").unwrap();
    let spec = format!("file:{}", path.display());
    let cfg = parse(&["run", "--n", "5", "--potential", &spec]).unwrap();
    assert_eq!(cfg.potential, Potential::Samples(vec![0.0, 1.0, 2.0, 3.0, 4.0]));

    std::fs::write(&path, "0,-1,0,0,0\n").unwrap();
    let cfg = parse(&["run", "--n", "5", "--potential", &spec]).unwrap();
    let err = execute(&cfg).unwrap_err();
    assert_eq!(err.exit_code(), 1);

    let cfg = parse(&["run", "--n", "6", "--potential", &spec]).unwrap();
    assert_eq!(execute(&cfg).unwrap_err().exit_code(), 1);
}

#[test]
fn run_json_round_trips_byte_for_byte() {
    let cfg = parse(&["run", "--n", "63", "--beta", "10", "--potential", "harmonic:20"]).unwrap();
    let out = execute(&cfg).unwrap();
    assert_eq!(out.code, 0);
    let Document::Run(doc) = &out.document else { panic!() };
    let text = out.document.render(Format::Json);
    let back: RunDocument = serde_json::from_str(&text).unwrap();
    assert_eq!(&back, doc);
    assert_eq!(to_json(&back), text);
    assert!(text.ends_with("}\n") && !text.ends_with("\n\n"));

    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    for key in ["scheme", "dim", "n", "beta", "potential", "seed", "version"] {
        assert!(v["meta"].get(key).is_some(), "meta.{key}");
    }
    for key in ["n", "energy", "residual", "gamma", "alpha", "decrease"] {
        assert!(v["iterations"][0].get(key).is_some(), "iterations.{key}");
    }
    assert_eq!(v["final"]["status"], "converged");
    assert!(v["final"]["rate"]["rho"].is_f64() && v["final"]["rate"]["r_squared"].is_f64());
}

#[test]
fn verify_and_sweep_documents_round_trip() {
    let cfg = parse(&["verify", "--n", "31", "--beta", "10", "--trials", "2"]).unwrap();
    let out = execute(&cfg).unwrap();
    assert_eq!(out.code, 0);
    let text = out.document.render(Format::Json);
    let back: VerifyDocument = serde_json::from_str(&text).unwrap();
    assert_eq!(to_json(&back), text);
    assert_eq!(back.summary.failed, 0);

    let cfg = parse(&["sweep", "--n", "31", "--beta", "10", "--alphas", "0.2,0.4"]).unwrap();
    let out = execute(&cfg).unwrap();
    let text = out.document.render(Format::Json);
    let back: SweepDocument = serde_json::from_str(&text).unwrap();
    assert_eq!(to_json(&back), text);
    assert_eq!(back.runs.len(), 2);
}

#[test]
fn csv_has_one_row_per_iteration() {
    let cfg = parse(&["run", "--n", "63", "--beta", "100", "--format", "csv"]).unwrap();
    let out = execute(&cfg).unwrap();
    let Document::Run(doc) = &out.document else { panic!() };
    let text = out.document.render(Format::Csv);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "n,energy,residual,gamma,alpha,decrease");
    assert_eq!(lines.len() - 1, doc.iterations.len());
    assert!(text.ends_with('\n') && !text.ends_with("\n\n"));
    // 17 significant digits, so every value parses back exactly
    for (line, row) in lines[1..].iter().zip(&doc.iterations) {
        let f: Vec<&str> = line.split(',').collect();
        assert_eq!(f[0].parse::<usize>().unwrap(), row.n);
        assert_eq!(f[1].parse::<f64>().unwrap(), row.energy);
        assert_eq!(f[2].parse::<f64>().unwrap(), row.residual);
        assert_eq!(f[3].parse::<f64>().unwrap(), row.gamma);
        assert_eq!(f[5].parse::<f64>().unwrap(), row.decrease);
        assert_eq!(f[1].split('e').next().unwrap().replace(['.', '-'], "").len(), 17);
    }
}

#[test]
fn same_seed_gives_identical_files() {
    let dir = tempfile::tempdir().unwrap();
    let run_to = |name: &str, seed: &str| {
        let path = dir.path().join(name);
        let o = bin(&[
            "run", "--n", "63", "--beta", "10", "--init", "random", "--seed", seed, "--format", "csv", "--output",
            path.to_str().unwrap(),
        ]);
        assert_eq!(o.status.code(), Some(0));
        assert!(o.stdout.is_empty());
        std::fs::read(&path).unwrap()
    };
    let a = run_to("a.csv", "3");
    let b = run_to("b.csv", "3");
    let c = run_to("c.csv", "4");
    assert_eq!(a, b);
    assert_ne!(a, c);
}

#[test]
fn sweep_output_does_not_depend_on_thread_count() {
    let args = ["sweep", "--n", "63", "--beta", "10", "--alphas", "0.1,0.2,0.3,0.4", "--format", "csv"];
    let run_with = |threads: &str| {
        Proc::new(env!("CARGO_BIN_EXE_gpflow"))
            .args(args)
            .env("GPFLOW_THREADS", threads)
            .output()
            .unwrap()
    };
    let one = run_with("1");
    let four = run_with("4");
    assert_eq!(one.stdout, four.stdout);
    assert_eq!(String::from_utf8_lossy(&one.stdout).lines().count(), 5);
    let bad = run_with("zero");
    assert_eq!(bad.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&bad.stderr).contains("GPFLOW_THREADS"));
}

#[test]
fn exit_codes() {
    assert_eq!(bin(&["run", "--n", "31", "--beta", "10"]).status.code(), Some(0));
    let usage = bin(&["run", "--scheme", "bogus"]);
    assert_eq!(usage.status.code(), Some(1));
    let msg = String::from_utf8_lossy(&usage.stderr);
    assert_eq!(msg.lines().count(), 1, "{msg}");
    assert_eq!(bin(&["run", "--bogus-flag"]).status.code(), Some(1));
    assert_eq!(bin(&["run", "--n", "31", "--beta", "10", "--max-iter", "2"]).status.code(), Some(2));
    // a loose tolerance stops far from the ground state, which the checks catch
    let loose = bin(&["verify", "--n", "31", "--beta", "10", "--tol", "1e-2"]);
    assert_eq!(loose.status.code(), Some(3));
    let doc: VerifyDocument = serde_json::from_slice(&loose.stdout).unwrap();
    assert!(doc.summary.failed > 0);
    assert_eq!(bin(&["--help"]).status.code(), Some(0));
}

#[test]
fn io_errors_name_the_path() {
    let o = bin(&["run", "--n", "15", "--output", "/nonexistent-dir/out.json"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("/nonexistent-dir/out.json"));
    let o = bin(&["run", "--potential", "file:/nonexistent-dir/v.csv"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(Path::new("/nonexistent-dir").exists() || String::from_utf8_lossy(&o.stderr).contains("v.csv"));
}

#[test]
fn spectrum_reports_a_gap() {
    let cfg = parse(&["spectrum", "--n", "63", "--beta", "100"]).unwrap();
    let out = execute(&cfg).unwrap();
    let Document::Spectrum(doc) = &out.document else { panic!() };
    assert!(doc.spectrum.gap > 0.0);
    assert!((doc.spectrum.lambda0 - doc.final_.lambda).abs() < 1e-6 * doc.spectrum.lambda0);
    let csv = out.document.render(Format::Csv);
    assert_eq!(csv.lines().count(), 2);
}
