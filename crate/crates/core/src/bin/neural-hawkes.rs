fn main() {
    std::process::exit(neural_hawkes::cli::main_exit_code());
}
