fn main() {
    std::process::exit(widthlab::cli::run_cli(std::env::args_os()));
}
