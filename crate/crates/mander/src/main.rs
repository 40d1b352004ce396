fn main() {
    std::process::exit(mander::cli::main());
}
