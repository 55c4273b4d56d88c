fn main() {
    std::process::exit(pbinfer::cli::run(std::env::args_os()));
}
