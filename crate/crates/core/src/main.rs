fn main() {
    std::process::exit(gff4d::cli::main_with_args(std::env::args_os()));
}
