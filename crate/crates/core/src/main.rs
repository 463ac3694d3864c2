fn main() {
    std::process::exit(clcc::cli::run(std::env::args_os()));
}
