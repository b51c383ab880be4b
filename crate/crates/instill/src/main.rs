fn main() {
    std::process::exit(instill::harness::cli::run(std::env::args_os()));
}
