fn main() {
    std::process::exit(qtraj::cli::main_with_args(std::env::args_os()));
}
