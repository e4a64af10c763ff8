use clap::Parser;
use queuenet::cli;

fn main() {
    env_logger::Builder::from_env(env_logger::Env::new().filter("QUEUENET_LOG")).init();
    let args = cli::Cli::parse();
    match cli::run(&args) {
        Ok(report) => print!("{}", report.render()),
        Err(err) => {
            eprintln!("queuenet: {} failed: {err}", cli::module_of(&err));
            std::process::exit(1);
        }
    }
}
