fn main() {
    std::process::exit(entropic_core::cli::main_with_args(std::env::args_os()));
}
