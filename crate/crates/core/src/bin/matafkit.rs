fn main() {
    std::process::exit(matafkit::cli::main_with_args(std::env::args_os()));
}
