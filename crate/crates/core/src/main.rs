fn main() {
    std::process::exit(dispatchsim::cli::main_with_args(std::env::args_os()));
}
