use clap::Parser;
use hodgelab_cli::{run, Cli};

fn main() {
    let cli = Cli::parse();
    let code = match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("hodgelab: {e}");
            e.exit_code()
        }
    };
    std::process::exit(code);
}
