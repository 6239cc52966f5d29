fn main() {
    std::process::exit(gslab::cli::main_with_args(std::env::args_os()));
}
