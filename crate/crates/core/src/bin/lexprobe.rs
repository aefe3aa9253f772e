fn main() {
    std::process::exit(lexprobe::cli::run(std::env::args_os()));
}
