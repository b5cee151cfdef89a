use std::path::Path;
use std::process::Command;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_latent-rom"));
    c.env("RUST_LOG", "warn");
    c
}

fn desk_config() -> std::path::PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/desk.toml")
}

fn code(c: &mut Command) -> i32 {
    c.output().unwrap().status.code().unwrap()
}

#[test]
fn help_and_usage() {
    assert_eq!(code(bin().arg("--help")), 0);
    assert_eq!(code(&mut bin()), 1);
    assert_eq!(code(bin().args(["fom", "--a", "0.8"])), 1);
    assert_eq!(code(bin().args(["bogus"])), 1);
}

#[test]
fn fom_success_and_negative_amplitude() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("u.lsdt");
    let cfg = desk_config();
    let status = bin()
        .args(["fom", "--config", cfg.to_str().unwrap(), "--a", "-0.5", "--w", "1.0", "--out", out.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(status.status.code(), Some(0), "{}", String::from_utf8_lossy(&status.stderr));
    let bytes = std::fs::read(&out).unwrap();
    assert_eq!(&bytes[..4], b"LSDT");
    assert_eq!(bytes.len(), 8 + 16 + 8 * 201 * 121);
}

#[test]
fn config_problems_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("u.lsdt");
    let bad = dir.path().join("bad.toml");
    let text = std::fs::read_to_string(desk_config()).unwrap();
    std::fs::write(&bad, text.replace("[fom]", "[fom]\nunknown_key = 1")).unwrap();
    assert_eq!(code(bin().args(["fom", "--config", bad.to_str().unwrap(), "--a", "1", "--w", "1", "--out", out.to_str().unwrap()])), 1);
    let missing = dir.path().join("missing.toml");
    assert_eq!(code(bin().args(["train", "--config", missing.to_str().unwrap(), "--out", out.to_str().unwrap()])), 1);
    let cfg = desk_config();
    assert_eq!(code(bin().args(["fom", "--config", cfg.to_str().unwrap(), "--a", "1", "--w", "0", "--out", out.to_str().unwrap()])), 1);
}

#[test]
fn newton_failure_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let strict = dir.path().join("strict.toml");
    let text = std::fs::read_to_string(desk_config()).unwrap();
    std::fs::write(&strict, text.replace("solver = \"dense\"", "solver = \"dense\"\nnewton_tol = 1e-300\nnewton_max_iter = 1")).unwrap();
    let out = dir.path().join("u.lsdt");
    let o = bin()
        .args(["fom", "--config", strict.to_str().unwrap(), "--a", "0.8", "--w", "1.0", "--out", out.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(!out.exists());
}
