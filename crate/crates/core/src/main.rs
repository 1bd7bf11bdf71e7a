fn main() {
    std::process::exit(stochfeas::cli::main_with_args(std::env::args_os()));
}
