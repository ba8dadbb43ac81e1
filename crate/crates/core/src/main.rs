fn main() {
    std::process::exit(epivax::cli::run(std::env::args_os()));
}
