fn main() {
    std::process::exit(hybrid_choice::cli::run(std::env::args_os()));
}
