fn main() {
    std::process::exit(cdprkit::cli::main_with_args(std::env::args_os()));
}
