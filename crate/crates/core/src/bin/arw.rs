fn main() {
    std::process::exit(arw::cli::run(std::env::args().skip(1)));
}
