// Dumps the MS-SSIM test pairs as raw little-endian float32 so that
// msssim_reference.py can score them with an independent implementation.
// Usage: make_msssim_pairs <out.bin>   (layout: 50 x 2 x 64 x 64, row-major)

#include "../common/msssim_pairs.hpp"

#include <cstdio>
#include <fstream>

int main(int argc, char** argv) {
  if (argc != 2) {
    std::fprintf(stderr, "usage: %s <out.bin>\n", argv[0]);
    return 2;
  }
  std::ofstream out(argv[1], std::ios::binary | std::ios::trunc);
  for (const auto& [a, b] : smile::testing::msssim_pairs()) {
    out.write(reinterpret_cast<const char*>(a.data()), std::streamsize(a.size() * sizeof(float)));
    out.write(reinterpret_cast<const char*>(b.data()), std::streamsize(b.size() * sizeof(float)));
  }
  return out ? 0 : 1;
}
