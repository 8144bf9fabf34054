fn main() {
    std::process::exit(aci::cli::run(std::env::args_os()));
}
