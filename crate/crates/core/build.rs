fn main() {
    // LAPACK (dgges) comes from the system library; libblas carries the BLAS symbols it needs.
    println!("cargo:rustc-link-lib=lapack");
    println!("cargo:rustc-link-lib=blas");
}
