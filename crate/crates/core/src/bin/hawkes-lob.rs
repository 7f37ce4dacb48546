fn main() {
    std::process::exit(hawkes_lob::cli::main_with_args(std::env::args_os()));
}
