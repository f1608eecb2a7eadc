fn main() {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("KGAT_LOG", "warn")).init();
    std::process::exit(kgat::cli::run(std::env::args_os()));
}
