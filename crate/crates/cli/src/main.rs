fn main() {
    std::process::exit(acttopo_cli::main_with_args(std::env::args_os()));
}
