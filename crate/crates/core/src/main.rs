fn main() {
    std::process::exit(migate::cli::run(std::env::args_os()));
}
