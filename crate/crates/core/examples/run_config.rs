//! Drives the batch harness from code: parses a config, runs it and prints the
//! summary block of the manifest.

use qtraj::cli::{parse_config, run_config};

fn main() {
    let text = "protocol = halfparity\nduration = 4\nn_trajectories = 2\nmaster_seed = 12\n\n[halfparity]\ngamma = 1\n";
    let cfg = parse_config(text).expect("valid config");
    let (artifacts, manifest) = run_config(&cfg, 1).expect("run");
    for line in manifest.lines().filter(|l| l.starts_with("summary.")) {
        println!("{line}");
    }
    println!("{} files in memory", artifacts.files.len());
}
