use clap::Parser;

fn main() {
    let cli = attnscale_cli::Cli::parse();
    let stdout = std::io::stdout();
    if let Err(e) = attnscale_cli::run(&cli, &mut stdout.lock()) {
        match e {
            attnscale_cli::CliError::Usage(_) => eprintln!("error: {e}\n\nFor more information, try '--help'."),
            _ => eprintln!("error: {e}"),
        }
        std::process::exit(e.exit_code());
    }
}
