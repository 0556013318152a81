fn main() {
    std::process::exit(hitchin_cli::app::main_with(std::env::args_os()));
}
