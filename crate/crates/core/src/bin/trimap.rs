fn main() {
    std::process::exit(trimap::cli::run(std::env::args()));
}
