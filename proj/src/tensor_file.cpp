#include "smile/io/tensor_file.hpp"

#include "smile/errors.hpp"
#include "smile/io/binary.hpp"

#include <fstream>
#include <sstream>

namespace smile::io {

const std::string* TensorFile::find_meta(const std::string& key) const {
  for (const auto& [k, v] : meta) {
    if (k == key) return &v;
  }
  return nullptr;
}

const nn::Mat<float>* TensorFile::find_tensor(const std::string& name) const {
  for (const auto& [n, t] : tensors) {
    if (n == name) return &t;
  }
  return nullptr;
}

void save_tensor_file(const TensorFile& file, const std::filesystem::path& path) {
  std::ostringstream header;
  header << kTensorFileVersion << "\n";
  for (const auto& [k, v] : file.meta) {
    if (k.find_first_of(" \n") != std::string::npos || v.find('\n') != std::string::npos) {
      throw std::invalid_argument("tensor file meta entries must be single-line, key without spaces: " + k);
    }
    header << "meta " << k << " " << v << "\n";
  }
  header << "tensors " << file.tensors.size() << "\n";
  for (const auto& [name, t] : file.tensors) {
    if (name.find_first_of(" \n") != std::string::npos) throw std::invalid_argument("tensor name with space: " + name);
    header << "tensor " << name << " " << t.rows() << " " << t.cols() << " f32le\n";
  }
  header << "end\n";
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out << header.str();
  for (const auto& [name, t] : file.tensors) write_f32_array(out, t.data(), t.size());
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

TensorFile load_tensor_file(const std::filesystem::path& path) {
  const std::string p = path.string();
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError(p, "file", "cannot open");
  std::string line;
  std::getline(in, line);
  if (line != kTensorFileVersion) {
    throw ParseError(p, "header 'version'", "unsupported format version '" + line + "'");
  }
  TensorFile file;
  std::size_t n_tensors = 0;
  bool have_count = false;
  while (std::getline(in, line)) {
    if (line.rfind("meta ", 0) == 0) {
      const auto rest = line.substr(5);
      const auto sp = rest.find(' ');
      if (sp == std::string::npos) throw ParseError(p, "meta line", "missing value: '" + line + "'");
      file.meta.emplace_back(rest.substr(0, sp), rest.substr(sp + 1));
    } else if (line.rfind("tensors ", 0) == 0) {
      std::istringstream ls(line.substr(8));
      if (!(ls >> n_tensors)) throw ParseError(p, "header 'tensors'", "bad count");
      have_count = true;
      break;
    } else {
      throw ParseError(p, "header", "unexpected line '" + line + "'");
    }
  }
  if (!have_count) throw ParseError(p, "header 'tensors'", "missing");
  std::vector<std::pair<std::string, std::pair<long, long>>> shapes;
  for (std::size_t i = 0; i < n_tensors; ++i) {
    if (!std::getline(in, line)) throw ParseError(p, "tensor header " + std::to_string(i), "unexpected end of file");
    std::istringstream ls(line);
    std::string tag, name, dtype;
    long rows = -1, cols = -1;
    if (!(ls >> tag >> name >> rows >> cols >> dtype) || tag != "tensor" || rows < 0 || cols < 0) {
      throw ParseError(p, "tensor header " + std::to_string(i), "malformed line '" + line + "'");
    }
    if (dtype != "f32le") throw ParseError(p, "tensor '" + name + "'", "unsupported dtype '" + dtype + "'");
    shapes.push_back({name, {rows, cols}});
  }
  if (!std::getline(in, line) || line != "end") throw ParseError(p, "header", "missing 'end' line");
  for (const auto& [name, shape] : shapes) {
    nn::Mat<float> t(shape.first, shape.second);
    if (!read_f32_array(in, t.data(), t.size())) throw ParseError(p, "tensor '" + name + "'", "truncated data");
    file.tensors.emplace_back(name, std::move(t));
  }
  if (in.peek() != std::char_traits<char>::eof()) throw ParseError(p, "trailer", "unexpected bytes after last tensor");
  return file;
}

void add_parameters(TensorFile& file, const std::string& prefix, const nn::ParameterSet<float>& params) {
  file.meta.emplace_back(prefix + "init_seed", std::to_string(params.init_seed));
  for (std::size_t i = 0; i < params.size(); ++i) file.tensors.emplace_back(prefix + params.names[i], params.tensors[i]);
}

void read_parameters(const TensorFile& file, const std::string& prefix, nn::ParameterSet<float>& params,
                     const std::string& path_for_errors) {
  if (const auto* seed = file.find_meta(prefix + "init_seed")) params.init_seed = std::stoull(*seed);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const std::string name = prefix + params.names[i];
    const auto* t = file.find_tensor(name);
    if (!t) throw ParseError(path_for_errors, "tensor '" + name + "'", "missing");
    if (t->rows() != params.tensors[i].rows() || t->cols() != params.tensors[i].cols()) {
      throw ParseError(path_for_errors, "tensor '" + name + "'",
                       "shape " + std::to_string(t->rows()) + "x" + std::to_string(t->cols()) + ", expected " +
                           std::to_string(params.tensors[i].rows()) + "x" + std::to_string(params.tensors[i].cols()));
    }
    params.tensors[i] = *t;
  }
}

}  // namespace smile::io
