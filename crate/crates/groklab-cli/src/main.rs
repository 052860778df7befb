fn main() {
    std::process::exit(groklab_cli::run(std::env::args_os()));
}
