//! Writes a small synthetic workspace for trying the command-line tool.
//!
//! cargo run --example demo_data -- /tmp/moodrank-demo

use moodrank::cli::RunConfig;
use moodrank::synth::{synthetic_world, write_workspace, WorldSpec};

fn main() {
    let dir = std::env::args()
        .nth(1)
        .unwrap_or_else(|| "moodrank-demo".into());
    let world = synthetic_world(&WorldSpec::default());
    match write_workspace(&dir, &world, &RunConfig::default()) {
        Ok(config) => println!("{}", config.display()),
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(2);
        }
    }
}
