fn main() {
    std::process::exit(latefuse::cli::run(std::env::args_os()));
}
