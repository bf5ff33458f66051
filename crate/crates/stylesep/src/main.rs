fn main() {
    std::process::exit(stylesep::run_cli());
}
