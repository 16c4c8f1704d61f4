fn main() {
    std::process::exit(flexml_cli::flexsim_main(std::env::args_os()));
}
