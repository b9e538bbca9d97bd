fn main() {
    if let Ok(out) = std::process::Command::new("git")
        .args(["describe", "--always", "--dirty"])
        .output()
    {
        if out.status.success() {
            println!(
                "cargo:rustc-env=SEQSR_GIT_DESCRIBE={}",
                String::from_utf8_lossy(&out.stdout).trim()
            );
        }
    }
    println!("cargo:rerun-if-changed=build.rs");
}
