fn main() {
    std::process::exit(clvsa::cli::run());
}
