#include "smile/data/dataset_io.hpp"

#include "smile/errors.hpp"
#include "smile/io/binary.hpp"

#include <fstream>
#include <sstream>

namespace smile::data {

namespace fs = std::filesystem;

namespace {

constexpr const char* kSplitNames[3] = {"train", "validation", "test"};

std::string expect_field(std::istream& in, const std::string& path, const std::string& key) {
  std::string line;
  if (!std::getline(in, line)) throw ParseError(path, "header '" + key + "'", "unexpected end of file");
  const auto space = line.find(' ');
  if (space == std::string::npos || line.substr(0, space) != key) {
    throw ParseError(path, "header '" + key + "'", "expected '" + key + " <value>', got '" + line + "'");
  }
  return line.substr(space + 1);
}

long long parse_int(const std::string& path, const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const long long out = std::stoll(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return out;
  } catch (const std::exception&) {
    throw ParseError(path, "header '" + key + "'", "not an integer: '" + v + "'");
  }
}

}  // namespace

void save_samples(const std::vector<Sample>& samples, const std::string& split_name, double labeled_fraction,
                  const fs::path& file) {
  int h = 0, w = 0;
  if (!samples.empty()) {
    h = static_cast<int>(samples.front().image.rows());
    w = static_cast<int>(samples.front().image.cols());
  }
  for (const auto& s : samples) {
    if (s.image.rows() != h || s.image.cols() != w) throw nn::ShapeError("save_samples: mixed image shapes");
    if (s.mask && (s.mask->rows() != h || s.mask->cols() != w)) {
      throw nn::ShapeError("save_samples: mask shape differs from image shape (id " + std::to_string(s.id) + ")");
    }
  }
  std::ofstream out(file, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + file.string() + " for writing");
  std::ostringstream header;
  header.precision(17);
  header << kDatasetVersion << "\n"
         << "split " << split_name << "\n"
         << "count " << samples.size() << "\n"
         << "height " << h << "\n"
         << "width " << w << "\n"
         << "dtype image=f32le mask=u8\n"
         << "labeled_fraction " << labeled_fraction << "\n"
         << "end\n";
  out << header.str();
  const std::vector<std::uint8_t> no_mask(static_cast<std::size_t>(h) * w, 0);
  for (const auto& s : samples) {
    io::write_u64(out, s.id);
    const std::uint8_t flags = (s.is_abnormal ? 1 : 0) | (s.mask ? 2 : 0);
    out.put(static_cast<char>(flags));
    io::write_f32_array(out, s.image.data(), s.image.size());
    if (s.mask) {
      out.write(reinterpret_cast<const char*>(s.mask->data()), s.mask->size());
    } else {
      out.write(reinterpret_cast<const char*>(no_mask.data()), static_cast<std::streamsize>(no_mask.size()));
    }
  }
  if (!out) throw std::runtime_error("write failed: " + file.string());
}

LoadedSamples load_samples(const fs::path& file) {
  const std::string path = file.string();
  std::ifstream in(file, std::ios::binary);
  if (!in) throw ParseError(path, "file", "cannot open");
  std::string version;
  std::getline(in, version);
  if (version != kDatasetVersion) {
    throw ParseError(path, "header 'version'",
                     "unsupported format version '" + version + "' (expected " + kDatasetVersion + ")");
  }
  LoadedSamples loaded;
  loaded.split_name = expect_field(in, path, "split");
  const long long count = parse_int(path, "count", expect_field(in, path, "count"));
  const long long h = parse_int(path, "height", expect_field(in, path, "height"));
  const long long w = parse_int(path, "width", expect_field(in, path, "width"));
  const std::string dtype = expect_field(in, path, "dtype");
  if (dtype != "image=f32le mask=u8") throw ParseError(path, "header 'dtype'", "unsupported dtype '" + dtype + "'");
  const std::string lf = expect_field(in, path, "labeled_fraction");
  try {
    loaded.labeled_fraction = std::stod(lf);
  } catch (const std::exception&) {
    throw ParseError(path, "header 'labeled_fraction'", "not a number: '" + lf + "'");
  }
  std::string end;
  std::getline(in, end);
  if (end != "end") throw ParseError(path, "header", "missing 'end' line");
  if (count < 0 || h < 0 || w < 0 || (count > 0 && (h == 0 || w == 0))) {
    throw ParseError(path, "header", "invalid shape/count");
  }

  const auto pixels = static_cast<std::size_t>(h * w);
  loaded.samples.reserve(static_cast<std::size_t>(count));
  for (long long r = 0; r < count; ++r) {
    const std::string record = "record " + std::to_string(r);
    Sample s;
    std::uint8_t flags = 0;
    if (!io::read_u64(in, s.id) || !in.read(reinterpret_cast<char*>(&flags), 1)) {
      throw ParseError(path, record, "truncated record header");
    }
    if (flags > 3) throw ParseError(path, record, "invalid flags byte " + std::to_string(flags));
    s.is_abnormal = flags & 1;
    s.image.resize(h, w);
    if (!io::read_f32_array(in, s.image.data(), static_cast<Eigen::Index>(pixels))) {
      throw ParseError(path, record + " (id " + std::to_string(s.id) + ")", "truncated image block");
    }
    LesionMask mask(h, w);
    if (!in.read(reinterpret_cast<char*>(mask.data()), static_cast<std::streamsize>(pixels))) {
      throw ParseError(path, record + " (id " + std::to_string(s.id) + ")", "truncated mask block");
    }
    if ((mask.array() > 1).any()) throw ParseError(path, record, "mask values must be 0 or 1");
    if (flags & 2) s.mask = std::move(mask);
    loaded.samples.push_back(std::move(s));
  }
  if (in.peek() != std::char_traits<char>::eof()) throw ParseError(path, "trailer", "unexpected bytes after last record");
  return loaded;
}

void save_dataset(const DatasetSplit& split, const fs::path& dir) {
  fs::create_directories(dir);
  const std::vector<Sample>* parts[3] = {&split.train, &split.validation, &split.test};
  for (int i = 0; i < 3; ++i) {
    save_samples(*parts[i], kSplitNames[i], split.labeled_fraction, dir / (std::string(kSplitNames[i]) + ".smds"));
  }
}

DatasetSplit load_dataset(const fs::path& dir) {
  DatasetSplit split;
  std::vector<Sample>* parts[3] = {&split.train, &split.validation, &split.test};
  for (int i = 0; i < 3; ++i) {
    auto loaded = load_samples(dir / (std::string(kSplitNames[i]) + ".smds"));
    if (loaded.split_name != kSplitNames[i]) {
      throw ParseError((dir / kSplitNames[i]).string(), "header 'split'",
                       "file declares split '" + loaded.split_name + "'");
    }
    *parts[i] = std::move(loaded.samples);
    if (i == 0) split.labeled_fraction = loaded.labeled_fraction;
  }
  return split;
}

}  // namespace smile::data
