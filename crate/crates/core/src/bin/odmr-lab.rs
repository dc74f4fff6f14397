fn main() {
    std::process::exit(odmr_lab::cli::main_with_env());
}
