mod args;
mod commands;
mod error;
mod report;

use clap::error::ErrorKind;
use clap::Parser;

use args::{Cli, Command};
use error::CliError;
use report::Context;

fn init_logging(verbose: u8) {
    let level = match verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        2 => log::LevelFilter::Debug,
        _ => log::LevelFilter::Trace,
    };
    env_logger::Builder::new()
        .filter_level(level)
        .parse_env("TEXTCAP_LOG")
        .format_timestamp(None)
        .init();
}

fn run(cli: Cli, invocation: Vec<String>) -> Result<(), CliError> {
    init_logging(cli.verbose);
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            return Err(CliError::usage("--jobs must be positive"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(|e| CliError::runtime("threads", e.to_string()))?;
    }
    let command = match &cli.command {
        Command::Gen(_) => "gen",
        Command::AttackEval(_) => "attack-eval",
        Command::DefenseFit(_) => "defense-fit",
        Command::DefenseEval(_) => "defense-eval",
        Command::AnnotateScore(_) => "annotate-score",
        Command::Project2d(_) => "project-2d",
        Command::Profiles => "profiles",
    };
    let ctx = Context {
        command,
        invocation,
        seed: cli.seed,
        out: cli.out.clone(),
    };
    let config = cli.config.as_deref();
    if config.is_some() && !matches!(cli.command, Command::AttackEval(_) | Command::DefenseFit(_) | Command::DefenseEval(_)) {
        log::warn!("--config is not used by {command}");
    }
    match &cli.command {
        Command::Gen(a) => commands::gen(&ctx, a),
        Command::AttackEval(a) => commands::attack_eval(&ctx, config, a),
        Command::DefenseFit(a) => commands::defense_fit(&ctx, config, a),
        Command::DefenseEval(a) => commands::defense_eval(&ctx, config, a),
        Command::AnnotateScore(a) => commands::annotate_score(&ctx, a),
        Command::Project2d(a) => commands::project_2d(&ctx, a),
        Command::Profiles => commands::profiles(&ctx),
    }
}

fn main() {
    let invocation: Vec<String> = std::env::args().skip(1).collect();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            let _ = e.print();
            std::process::exit(0);
        }
        Err(e) => {
            let text = e.to_string();
            let first = text.lines().next().unwrap_or("invalid arguments");
            eprintln!("{}", CliError::usage(first.trim_start_matches("error: ")));
            eprintln!("{}", text.trim_end());
            std::process::exit(1);
        }
    };
    if let Err(e) = run(cli, invocation) {
        eprintln!("{e}");
        std::process::exit(e.exit_code());
    }
}
