use clap::Parser;

use fracfk_cli::config::Cli;

fn main() {
    let cli = Cli::parse();
    match fracfk_cli::run(&cli) {
        Ok(summary) => eprintln!("{summary}"),
        Err(err) => {
            eprintln!("error: {err}");
            std::process::exit(err.exit_code());
        }
    }
}
