fn main() {
    std::process::exit(radioslam::cli::run(std::env::args_os()));
}
