fn main() {
    std::process::exit(apspde::harness::cli::run_cli(std::env::args_os()));
}
