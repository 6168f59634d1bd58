fn main() {
    std::process::exit(medimax::cli::main_entry());
}
