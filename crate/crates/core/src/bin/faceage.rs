fn main() {
    std::process::exit(faceage::cli::run(std::env::args_os()));
}
