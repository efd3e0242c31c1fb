use env_logger::Env;

fn main() {
    env_logger::Builder::from_env(Env::new().filter_or("CHARLIER_LOG", "warn")).init();
    std::process::exit(charlier_core::harness::cli::run(std::env::args_os()));
}
