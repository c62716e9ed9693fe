#include <iostream>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

#include "cli.hpp"

int main(int argc, char** argv) {
#if defined(__GLIBC__)
    // Window matrices are large and short-lived; keep freed pages instead of
    // returning them to the kernel after every batch.
    mallopt(M_MMAP_THRESHOLD, 32 << 20);
    mallopt(M_TRIM_THRESHOLD, 1 << 30);
#endif
    return flowmixer::cli::run(argc, argv, std::cout, std::cerr);
}
