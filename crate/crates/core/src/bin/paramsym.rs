fn main() {
    std::process::exit(paramsym::cli::main_entry());
}
