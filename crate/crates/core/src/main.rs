fn main() {
    std::process::exit(locorank_core::cli::run());
}
