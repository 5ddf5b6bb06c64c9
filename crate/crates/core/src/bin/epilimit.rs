fn main() {
    std::process::exit(epilimit::cli::run(std::env::args_os()));
}
