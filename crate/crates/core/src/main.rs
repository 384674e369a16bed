fn main() {
    std::process::exit(evtfair::cli::run(std::env::args_os()));
}
