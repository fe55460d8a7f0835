use clap::{Parser, Subcommand};
use egosent_cli::{cmd_evaluate, cmd_score, cmd_segment, cmd_synth, CliError, Overrides, EXIT_OK};

#[derive(Parser)]
#[command(name = "egosent", version, about = "Event sentiment for egocentric photostreams")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Split a photostream into events and write a boundaries CSV.
    Segment(Overrides),
    /// Score events and write a JSON-lines report.
    Score(Overrides),
    /// Cross-validate the fusion weights on labelled events.
    Evaluate(Overrides),
    /// Generate a synthetic labelled corpus.
    Synth(Overrides),
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Segment(o) => {
            let out = cmd_segment(&o.resolve()?)?;
            println!("{} events -> {}", out.n_events, out.path.display());
        }
        Command::Score(o) => {
            let cfg = o.resolve()?;
            let report = cmd_score(&cfg)?;
            println!(
                "{}",
                serde_json::to_string(&report.summary).expect("summary serializes")
            );
        }
        Command::Evaluate(o) => {
            let report = cmd_evaluate(&o.resolve()?)?;
            let best = &report.evaluation.best;
            let test = &report.evaluation.best_test.point;
            println!(
                "best alpha={} beta={} strategy={}: test accuracy {:.3} +- {:.3}, F1 {:.3} +- {:.3}",
                best.alpha, best.beta, best.strategy, test.mean_accuracy, test.std_accuracy, test.mean_f1, test.std_f1
            );
        }
        Command::Synth(o) => {
            let dir = cmd_synth(&o.resolve()?)?;
            println!("{}", dir.display());
        }
    }
    Ok(())
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let code = match run(Cli::parse()) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    };
    std::process::exit(code);
}
