fn main() {
    std::process::exit(sparsegp::cli::run());
}
