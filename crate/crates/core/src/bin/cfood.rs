fn main() {
    std::process::exit(cfood::cli::main());
}
