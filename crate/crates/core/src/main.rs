fn main() {
    std::process::exit(fingermi::cli::run(std::env::args_os()));
}
