fn main() {
    std::process::exit(sarglr::cli::run(std::env::args_os()));
}
