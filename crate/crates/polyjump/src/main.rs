fn main() {
    std::process::exit(polyjump::cli::main());
}
