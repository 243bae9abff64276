fn main() {
    std::process::exit(qdro::cli::run());
}
