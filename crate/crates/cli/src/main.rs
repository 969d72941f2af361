fn main() {
    std::process::exit(polylab_cli::run(std::env::args_os()));
}
