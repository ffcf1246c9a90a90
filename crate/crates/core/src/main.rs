fn main() {
    std::process::exit(patchwork::cli::run(std::env::args_os()));
}
