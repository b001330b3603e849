fn main() {
    std::process::exit(gpflow_cli::main_with(std::env::args_os()));
}
