fn main() {
    std::process::exit(skintone_cli::run(std::env::args_os()));
}
