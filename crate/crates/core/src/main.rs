fn main() {
    std::process::exit(hybrid_ode::cli::run(std::env::args_os()));
}
