fn main() {
    std::process::exit(orchsim::cli::run_cli(std::env::args_os()));
}
