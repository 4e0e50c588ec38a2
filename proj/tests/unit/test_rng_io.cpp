#include <doctest.h>

#include "smile/io/binary.hpp"
#include "smile/io/tensor_file.hpp"
#include "smile/errors.hpp"
#include "smile/rng.hpp"

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

using namespace smile;

TEST_CASE("stream seeds are distinct per name and index and stable per input") {
  std::set<std::uint64_t> seen;
  for (const char* name : {"init/G", "init/S", "init/R", "batches/labeled", "panels"}) {
    for (std::uint64_t i = 0; i < 20; ++i) seen.insert(stream_seed(7, name, i));
  }
  CHECK(seen.size() == 100);
  CHECK(stream_seed(7, "init/G") == stream_seed(7, "init/G"));
  CHECK(stream_seed(7, "init/G") != stream_seed(8, "init/G"));
}

TEST_CASE("uniform helpers stay in range and shuffle permutes") {
  Rng rng = make_stream(1, "t");
  for (int i = 0; i < 1000; ++i) {
    const double u = uniform01(rng);
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
    CHECK(uniform_index(rng, 7) < 7);
  }
  std::vector<int> v(50);
  for (int i = 0; i < 50; ++i) v[i] = i;
  shuffle(v.begin(), v.end(), rng);
  std::set<int> s(v.begin(), v.end());
  CHECK(s.size() == 50);
}

TEST_CASE("little-endian primitives round-trip") {
  std::stringstream ss;
  io::write_u64(ss, 0x0123456789abcdefULL);
  const float vals[3] = {1.5f, -0.0f, 3.25e-12f};
  io::write_f32_array(ss, vals, 3);
  const std::string bytes = ss.str();
  REQUIRE(bytes.size() == 20);
  CHECK(static_cast<unsigned char>(bytes[0]) == 0xef);
  std::uint64_t u = 0;
  float back[3];
  REQUIRE(io::read_u64(ss, u));
  REQUIRE(io::read_f32_array(ss, back, 3));
  CHECK(u == 0x0123456789abcdefULL);
  CHECK(std::memcmp(vals, back, sizeof(vals)) == 0);
}

TEST_CASE("tensor file round-trips exactly and rejects damage") {
  const auto dir = std::filesystem::temp_directory_path() / "smile_tensor_file_test";
  std::filesystem::create_directories(dir);
  io::TensorFile f;
  f.meta.emplace_back("spec", "in=1,out=1");
  nn::Mat<float> a(2, 3);
  a << 1, 2, 3, 4, 5, 6.5f;
  f.tensors.emplace_back("a", a);
  f.tensors.emplace_back("b", nn::Mat<float>::Constant(1, 4, -1e-30f));
  io::save_tensor_file(f, dir / "t.smt");
  const auto g = io::load_tensor_file(dir / "t.smt");
  REQUIRE(g.find_meta("spec"));
  CHECK(*g.find_meta("spec") == "in=1,out=1");
  REQUIRE(g.find_tensor("a"));
  CHECK(*g.find_tensor("a") == a);
  CHECK(*g.find_tensor("b") == f.tensors[1].second);

  // Truncation is reported, not silently accepted.
  const auto size = std::filesystem::file_size(dir / "t.smt");
  std::filesystem::resize_file(dir / "t.smt", size - 3);
  CHECK_THROWS_AS(io::load_tensor_file(dir / "t.smt"), ParseError);
  std::filesystem::remove_all(dir);
}
