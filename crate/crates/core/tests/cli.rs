use std::path::Path;
use std::process::{Command, Output};

fn fracbdf(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fracbdf"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

const SMALL: [&str; 8] = ["--M", "10", "--N", "10,20", "--ref-factor", "4", "--alpha", "0.5"];

#[test]
fn weights_subcommand_succeeds() {
    let out = fracbdf(&["weights", "--alpha", "1", "--k", "2", "--count", "4"]);
    assert_eq!(code(&out), 0);
    assert_eq!(stdout(&out), "j,weight\n0,1.5e0\n1,-2e0\n2,5e-1\n3,0e0\n");
}

#[test]
fn converge_writes_the_same_csv_to_a_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("errors.csv");
    let mut args = vec!["converge", "--case", "a", "--k", "2"];
    args.extend(SMALL);
    let printed = fracbdf(&args);
    assert_eq!(code(&printed), 0);
    args.extend(["--out", path.to_str().unwrap()]);
    let written = fracbdf(&args);
    assert_eq!(code(&written), 0);
    assert_eq!(std::fs::read_to_string(&path).unwrap(), stdout(&printed));
    assert!(stdout(&printed).starts_with("case,scheme,alpha,k,N,error,rate,theoretical_rate\n"));
}

#[test]
fn flags_override_the_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("study.toml");
    std::fs::write(&config, "case = \"b\"\nalpha = [0.25]\nk = [3]\nN = [10, 20]\nM = 10\nref_factor = 4\n").unwrap();
    let config = config.to_str().unwrap();
    let from_file = fracbdf(&["converge", "--config", config]);
    assert_eq!(code(&from_file), 0);
    assert!(stdout(&from_file).lines().nth(1).unwrap().starts_with("b,corrected,0.25,3,10,"));
    let overridden = fracbdf(&["converge", "--config", config, "--k", "2"]);
    assert!(stdout(&overridden).lines().nth(1).unwrap().starts_with("b,corrected,0.25,2,10,"));
}

#[test]
fn dump_weights_covers_the_sweep() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("weights.csv");
    let mut args = vec!["converge", "--case", "a", "--k", "2,3", "--dump-weights", path.to_str().unwrap()];
    args.extend(SMALL);
    assert_eq!(code(&fracbdf(&args)), 0);
    let text = std::fs::read_to_string(Path::new(&path)).unwrap();
    assert_eq!(text.lines().next(), Some("alpha,k,j,weight"));
    // two orders, indices 0..=20
    assert_eq!(text.lines().count(), 1 + 2 * 21);
}

#[test]
fn configuration_errors_exit_with_2() {
    let mut bad_order = vec!["converge", "--k", "7"];
    bad_order.extend(SMALL);
    assert_eq!(code(&fracbdf(&bad_order)), 2);

    let wrong_regime = fracbdf(&["converge", "--case", "a", "--alpha", "1.5", "--M", "10", "--N", "10,20"]);
    assert_eq!(code(&wrong_regime), 2);

    let unsorted = fracbdf(&["converge", "--M", "10", "--N", "20,10"]);
    assert_eq!(code(&unsorted), 2);

    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("bad.toml");
    std::fs::write(&config, "cases = \"a\"\n").unwrap();
    assert_eq!(code(&fracbdf(&["converge", "--config", config.to_str().unwrap()])), 2);
}

#[test]
fn stability_refusal_exits_with_3() {
    let out = fracbdf(&["converge", "--case", "c", "--alpha", "1.5", "--k", "5", "--M", "100", "--N", "10,20"]);
    assert_eq!(code(&out), 3);
    assert!(String::from_utf8_lossy(&out.stderr).contains("threshold"));
}

#[test]
fn failed_rate_check_exits_with_4() {
    let mut args = vec!["converge", "--case", "a", "--k", "2"];
    args.extend(SMALL);
    let mut strict = args.clone();
    strict.extend(["--check", "1e-9"]);
    assert_eq!(code(&fracbdf(&strict)), 4);
    let mut loose = args;
    loose.extend(["--check", "10"]);
    assert_eq!(code(&fracbdf(&loose)), 0);
}
