fn main() {
    std::process::exit(mot::cli::main_entry());
}
