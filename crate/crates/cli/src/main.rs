fn main() {
    std::process::exit(fochem::run(std::env::args_os()));
}
