use clap::Parser;
use ultm::cli::{error_exit_code, run, Cli};

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let code = match run(&cli) {
        Ok(status) => status.exit_code(),
        Err(err) => {
            eprintln!("error: {err}");
            error_exit_code(&err)
        }
    };
    std::process::exit(code);
}
