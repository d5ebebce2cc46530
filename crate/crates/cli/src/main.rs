fn main() {
    std::process::exit(vsg_cli::main_with_args(std::env::args_os()));
}
