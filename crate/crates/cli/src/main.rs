fn main() {
    std::process::exit(trpca_cli::run(std::env::args_os()));
}
