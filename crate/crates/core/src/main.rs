fn main() {
    std::process::exit(shieldrl::cli::main_with_args(std::env::args_os()));
}
