fn main() {
    std::process::exit(dcheck::main_with(std::env::args_os()));
}
