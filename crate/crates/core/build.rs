// Link the system OpenBLAS (provides BLAS, CBLAS and LAPACK symbols) for
// the LAPACK-backed kernels; avoids building a vendored BLAS from source.
fn main() {
    println!("cargo:rustc-link-lib=dylib=openblas");
}
