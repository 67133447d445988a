fn main() {
    std::process::exit(lrpae_cli::main_with_args(std::env::args_os()));
}
