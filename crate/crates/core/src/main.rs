fn main() {
    std::process::exit(sidcstr::cli::main_with_args(std::env::args_os()));
}
