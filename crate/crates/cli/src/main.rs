fn main() {
    std::process::exit(metalyap_cli::run(std::env::args_os()));
}
