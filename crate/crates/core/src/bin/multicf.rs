fn main() {
    std::process::exit(multicf::cli::run(std::env::args_os()));
}
