fn main() {
    std::process::exit(nisac_harness::cli::run_from(std::env::args_os()));
}
