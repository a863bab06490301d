fn main() {
    std::process::exit(iqahead::cli::run(std::env::args_os()) as i32);
}
