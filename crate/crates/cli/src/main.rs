fn main() {
    std::process::exit(hexposome_cli::run(std::env::args_os()));
}
