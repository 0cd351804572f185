fn main() {
    std::process::exit(mfrc_cli::run(std::env::args_os()));
}
