fn main() {
    std::process::exit(seplab::cli::run(std::env::args_os()));
}
