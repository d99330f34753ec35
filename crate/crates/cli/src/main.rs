use clap::Parser;
use qctrl_cli::{exit_code, run, Cli};

fn main() {
    let cli = Cli::parse();
    if let Some(n) = std::env::var("QCTRL_THREADS")
        .ok()
        .and_then(|s| s.parse::<usize>().ok())
    {
        if n > 0 {
            rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build_global()
                .expect("thread pool is configured once");
        }
    }
    if let Err(err) = run(cli) {
        eprintln!("error: {err:#}");
        std::process::exit(exit_code(&err));
    }
}
