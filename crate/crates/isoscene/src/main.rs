fn main() {
    std::process::exit(isoscene::cli::run());
}
