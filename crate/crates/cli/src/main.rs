fn main() {
    std::process::exit(gps_cli::run_cli(std::env::args_os()));
}
