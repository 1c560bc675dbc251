fn main() {
    brainformer::cli::init_logging();
    std::process::exit(brainformer::cli::main_with_args(std::env::args_os()));
}
