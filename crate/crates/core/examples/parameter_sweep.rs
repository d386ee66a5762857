//! The experiment harness as a library: resolve a config, run a sweep on a
//! worker pool and render the CSV the `ham` binary would write.
//!
//! `cargo run --release --example parameter_sweep`

use ham_core::harness::{parse_config_text, render_csv, run, summary_record, Command, ExperimentConfig};

fn main() -> ham_core::Result<()> {
    let file = parse_config_text(
        "command = regression\n\
         axes = method=gd,ham,ham-signed;alpha=10,100\n\
         eta = 1e-3\n\
         steps = 5000\n\
         log-every = 5000\n\
         workers = 4\n",
    )?;
    let cfg = ExperimentConfig::resolve(Command::Sweep, &file, &[])?;
    let result = run(&cfg);
    println!("{}", summary_record(&cfg, &result));
    print!("{}", render_csv(&cfg, &result?));
    Ok(())
}
