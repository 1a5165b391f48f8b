fn main() {
    std::process::exit(modelbelief::cli::run_command(std::env::args_os().skip(1)));
}
