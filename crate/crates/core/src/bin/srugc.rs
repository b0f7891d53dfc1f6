fn main() {
    std::process::exit(srugc::cli::run(std::env::args_os()));
}
