fn main() {
    std::process::exit(dcbp::cli::run(std::env::args()));
}
