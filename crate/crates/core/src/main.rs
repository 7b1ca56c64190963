fn main() {
    std::process::exit(pcdiff::cli::main_with_args(std::env::args_os()));
}
