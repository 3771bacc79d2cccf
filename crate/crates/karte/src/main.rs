fn main() {
    std::process::exit(karte::cli::run(std::env::args_os()));
}
