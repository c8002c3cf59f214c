fn main() {
    std::process::exit(g2deform::cli::main_with_args(std::env::args_os()));
}
