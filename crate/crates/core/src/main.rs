fn main() {
    std::process::exit(seir_filter::cli::main_with_args(std::env::args_os()));
}
