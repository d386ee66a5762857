//! `ham`: command-line front end for the experiment harness.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::parser::ValueSource;
use clap::{Arg, ArgAction, ArgMatches};
use ham_core::harness::{cli_main, Command, KeySpec};

fn key_args(keys: &[KeySpec]) -> Vec<Arg> {
    keys.iter()
        .map(|k| {
            let help = if k.default.is_empty() {
                k.help.to_string()
            } else {
                format!("{} [default: {}]", k.help, k.default)
            };
            Arg::new(k.name)
                .long(k.name)
                .value_name("VALUE")
                .allow_negative_numbers(true)
                .allow_hyphen_values(true)
                .help(help)
        })
        .collect()
}

fn subcommand(cmd: Command) -> clap::Command {
    let mut keys = cmd.keys();
    if cmd == Command::Sweep {
        // any key of a swept command is accepted; it is validated once the command is known
        for inner in Command::ALL {
            for k in inner.keys() {
                if !keys.iter().any(|s| s.name == k.name) {
                    keys.push(k);
                }
            }
        }
    }
    clap::Command::new(cmd.name())
        .about(cmd.about())
        .after_help(format!("CSV columns: {}", cmd.csv_schema()))
        .arg(
            Arg::new("config")
                .long("config")
                .value_name("FILE")
                .action(ArgAction::Set)
                .help("flat key=value config file; flags take precedence"),
        )
        .args(key_args(&keys))
}

fn overrides(m: &ArgMatches) -> Vec<(String, String)> {
    m.ids()
        .filter(|id| id.as_str() != "config")
        .filter(|id| m.value_source(id.as_str()) == Some(ValueSource::CommandLine))
        .filter_map(|id| {
            m.get_one::<String>(id.as_str())
                .map(|v| (id.as_str().to_string(), v.clone()))
        })
        .collect()
}

fn main() -> ExitCode {
    let cli = clap::Command::new("ham")
        .version(env!("CARGO_PKG_VERSION"))
        .about("Hyperbolic Aware Minimization experiments")
        .subcommand_required(true)
        .after_help("Exit status: 0 ok, 2 configuration error, 3 numerical failure.")
        .subcommands(Command::ALL.map(subcommand));
    let matches = cli.get_matches();
    let (name, sub) = matches.subcommand().expect("subcommand is required");
    let command = Command::parse(name).expect("clap only accepts known subcommands");
    let config = sub.get_one::<String>("config").map(PathBuf::from);
    let code = cli_main(command, config.as_deref(), &overrides(sub));
    ExitCode::from(code as u8)
}
