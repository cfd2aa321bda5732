use std::process::Command;

fn micros(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_dsa-micros")).args(args).output().unwrap()
}

#[test]
fn sweep_writes_one_row_per_point() {
    let out = micros(&["--ts", "1K,4K", "--bs", "1,4", "--mode", "async", "--iters", "8"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap().split(',').count(), 16);
    let rows: Vec<_> = lines.collect();
    assert_eq!(rows.len(), 4);
    assert!(rows[0].starts_with("memcpy,async,1024,1,"));
}

#[test]
fn out_file_matches_stdout_and_is_deterministic() {
    let dir = std::env::temp_dir().join(format!("dsa-micros-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("sweep.csv");
    let args = ["--ts", "2K", "--engines", "2", "--fault-p", "0.2", "--seed", "7", "--iters", "16"];
    let stdout = micros(&args).stdout;
    let mut with_out = args.to_vec();
    with_out.extend(["--out", path.to_str().unwrap()]);
    assert!(micros(&with_out).status.success());
    assert_eq!(std::fs::read(&path).unwrap(), stdout);
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn config_file_is_honoured() {
    let dir = std::env::temp_dir().join(format!("dsa-micros-cfg-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("platform.ini");
    std::fs::write(&path, "[platform]\nseed = 3\n").unwrap();
    let out = micros(&["--config", path.to_str().unwrap(), "--iters", "4"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    std::fs::write(&path, "[platform]\ndevices = zero\n").unwrap();
    assert!(!micros(&["--config", path.to_str().unwrap()]).status.success());
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn bad_arguments_fail() {
    assert!(!micros(&["--op", "nope"]).status.success());
    assert!(!micros(&["--ts", "4Q"]).status.success());
    assert!(!micros(&["--wqs", "2", "--threads", "3"]).status.success());
    assert!(!micros(&["preset", "G9"]).status.success());
}

#[test]
fn presets_and_forward_run() {
    let out = micros(&["preset", "G2"]);
    assert!(out.status.success());
    assert!(String::from_utf8(out.stdout).unwrap().starts_with("G2 PASS"));

    let out = micros(&["forward", "--sizes", "64", "--modes", "dsa_offload", "--duration-ns", "100000"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().count(), 2);
    assert!(text.lines().nth(1).unwrap().starts_with("64,dsa_offload,"));

    let out = micros(&["breakdown", "--ts", "4K", "--bs", "1,8", "--reps", "2"]);
    assert_eq!(String::from_utf8(out.stdout).unwrap().lines().count(), 3);
}
