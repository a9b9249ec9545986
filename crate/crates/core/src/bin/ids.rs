fn main() {
    std::process::exit(ids_core::cli::main_from_env());
}
