fn main() {
    std::process::exit(tworow::cli::main_with_args(std::env::args()));
}
