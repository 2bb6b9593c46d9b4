fn main() {
    std::process::exit(cachelab::cli::main());
}
