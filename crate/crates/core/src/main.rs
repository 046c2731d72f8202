fn main() {
    std::process::exit(htype::cli::main_with_args(std::env::args_os()));
}
