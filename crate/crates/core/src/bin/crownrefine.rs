fn main() {
    crownrefine::cli::main()
}
