fn main() {
    std::process::exit(flexml_cli::flexc_main(std::env::args_os()));
}
