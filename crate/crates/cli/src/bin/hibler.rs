fn main() {
    std::process::exit(hibler_cli::dispatch(std::env::args_os()));
}
