#include <malloc.h>

#include "redssl/runner/cli.hpp"

int main(int argc, char** argv) {
  // The training loop allocates and frees batch-sized matrices every step;
  // keeping them on the heap avoids an mmap/munmap pair per allocation.
  mallopt(M_MMAP_THRESHOLD, 256 << 20);
  mallopt(M_TRIM_THRESHOLD, 512 << 20);
  return redssl::runner::cli_dispatch(argc, argv);
}
