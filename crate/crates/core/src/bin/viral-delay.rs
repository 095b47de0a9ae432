fn main() {
    std::process::exit(viral_delay::cli::main());
}
