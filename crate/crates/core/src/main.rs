fn main() {
    std::process::exit(rislink::cli::run(std::env::args_os()));
}
