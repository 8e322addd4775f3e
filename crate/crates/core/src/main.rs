fn main() {
    std::process::exit(dpq_routing::cli::run_cli(std::env::args_os()));
}
