fn main() {
    std::process::exit(skelsplat::cli::main_with_args(std::env::args_os()));
}
