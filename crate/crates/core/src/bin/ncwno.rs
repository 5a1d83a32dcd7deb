fn main() {
    std::process::exit(ncwno::cli::main_with_args(std::env::args_os()));
}
