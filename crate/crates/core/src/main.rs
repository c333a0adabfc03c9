fn main() {
    std::process::exit(minhgr::cli::main_entry());
}
