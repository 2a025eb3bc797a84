fn main() {
    std::process::exit(sgw_gan::cli::run(std::env::args_os()));
}
