use std::process::{Command, Output};

fn osl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_osl"))
        .args(args)
        .current_dir(concat!(env!("CARGO_MANIFEST_DIR"), "/data"))
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn dist_prints_lambda_and_witness() {
    let o = osl(&["dist", "nonconvex_x.json", "nonconvex_y.json"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).starts_with("lambda=8/7 witness=b\n"));
}

#[test]
fn output_is_deterministic() {
    let args = ["path", "nonconvex_x.json", "nonconvex_y.json", "--mode", "balanced"];
    let a = osl(&args);
    let b = osl(&args);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn usage_and_io_errors_exit_2() {
    assert_eq!(osl(&["bogus"]).status.code(), Some(2));
    assert_eq!(osl(&["dist", "nonconvex_x.json", "missing.json"]).status.code(), Some(2));
    assert_eq!(osl(&["verify-example", "no_such_scene"]).status.code(), Some(2));
}

#[test]
fn in_ball_scene_verifies() {
    let o = osl(&["verify-example", "in_ball", "--m", "10"]);
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    assert!(out.contains("28/5"));
    assert!(!out.contains("FAIL"));
}

#[test]
fn rigidity_report_on_nonconvex_pair() {
    let o = osl(&["check-rigid", "nonconvex_x.json", "nonconvex_y.json"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).trim_end().ends_with("rigid=true"));
}
