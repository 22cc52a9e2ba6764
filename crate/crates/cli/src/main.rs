fn main() {
    std::process::exit(foreclosure_lab::run(std::env::args_os()));
}
