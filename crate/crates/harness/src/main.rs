fn main() {
    std::process::exit(relaxed_harness::cli::run_cli(std::env::args_os()));
}
