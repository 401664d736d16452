fn main() {
    std::process::exit(mjghd::cli::run(std::env::args_os()));
}
