fn main() {
    std::process::exit(pinhole::cli::main_with(std::env::args_os()));
}
