fn main() {
    std::process::exit(qtmine::cli::run(std::env::args_os()));
}
