fn main() {
    std::process::exit(relward::cli::run(std::env::args_os()));
}
