fn main() {
    std::process::exit(gpp_extremes_cli::main_with_args(std::env::args_os()));
}
