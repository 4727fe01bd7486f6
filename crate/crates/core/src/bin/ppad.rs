fn main() {
    std::process::exit(ppad::cli::run(std::env::args_os()));
}
