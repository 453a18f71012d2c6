fn main() {
    std::process::exit(permassist_cli::main_with_args(std::env::args_os()));
}
