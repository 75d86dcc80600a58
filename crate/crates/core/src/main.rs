fn main() {
    std::process::exit(mealdmd::cli::run(std::env::args_os()));
}
