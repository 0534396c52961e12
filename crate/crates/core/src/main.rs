fn main() {
    std::process::exit(bergman_ke::cli::main_with_args(std::env::args_os()));
}
