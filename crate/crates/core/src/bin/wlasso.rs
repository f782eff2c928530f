fn main() {
    std::process::exit(wlasso::cli::run(std::env::args_os()));
}
