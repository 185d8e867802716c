fn main() {
    std::process::exit(fredjost::cli::main_with_args(std::env::args_os()));
}
