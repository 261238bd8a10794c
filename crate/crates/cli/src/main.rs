fn main() {
    std::process::exit(cogflow_cli::run(std::env::args_os()));
}
