fn main() {
    std::process::exit(fogclear_cli::run(std::env::args().collect()));
}
