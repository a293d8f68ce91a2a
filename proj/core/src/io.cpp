#include "mftma/io.hpp"

#include <cstring>
#include <fstream>
#include <sstream>
#include <vector>

namespace mftma {

namespace {

class BinaryWriter {
 public:
  explicit BinaryWriter(const std::filesystem::path& path)
      : path_(path), out_(path, std::ios::binary | std::ios::trunc) {
    if (!out_) throw IoError("cannot open " + path.string() + " for writing");
  }
  void magic(const char m[4]) { out_.write(m, 4); }
  void u32(std::uint32_t v) { raw(&v, sizeof(v)); }
  void u64(std::uint64_t v) { raw(&v, sizeof(v)); }
  void f64(double v) { raw(&v, sizeof(v)); }
  void u8(std::uint8_t v) { raw(&v, sizeof(v)); }
  void matrix_rowmajor(const Matrix& m) {
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      for (Eigen::Index j = 0; j < m.cols(); ++j) f64(m(i, j));
    }
  }
  void close() {
    out_.close();
    if (!out_) throw IoError("write failed for " + path_.string());
  }

 private:
  void raw(const void* p, std::size_t bytes) {
    out_.write(static_cast<const char*>(p), static_cast<std::streamsize>(bytes));
  }
  std::filesystem::path path_;
  std::ofstream out_;
};

class BinaryReader {
 public:
  explicit BinaryReader(const std::filesystem::path& path) : path_(path) {
    std::ifstream in(path, std::ios::binary | std::ios::ate);
    if (!in) throw IoError("cannot open " + path.string());
    const auto size = in.tellg();
    in.seekg(0);
    buffer_.resize(static_cast<std::size_t>(size));
    in.read(buffer_.data(), size);
    if (!in) throw IoError("read failed for " + path.string());
  }
  void expect_magic(const char m[4], const char* format_name) {
    char got[4];
    raw(got, 4);
    if (std::memcmp(got, m, 4) != 0) {
      throw IoError(std::string("bad magic for ") + format_name + " in " +
                    path_.string());
    }
  }
  std::uint32_t u32() { return scalar<std::uint32_t>(); }
  std::uint64_t u64() { return scalar<std::uint64_t>(); }
  double f64() { return scalar<double>(); }
  std::uint8_t u8() { return scalar<std::uint8_t>(); }
  Matrix matrix_rowmajor(Eigen::Index rows, Eigen::Index cols) {
    Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i) {
      for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = f64();
    }
    return m;
  }
  void done() {
    if (offset_ != buffer_.size()) {
      std::ostringstream os;
      os << path_.string() << ": trailing bytes (consumed " << offset_
         << " of " << buffer_.size() << ")";
      throw IoError(os.str());
    }
  }

 private:
  template <typename T>
  T scalar() {
    T v;
    raw(&v, sizeof(v));
    return v;
  }
  void raw(void* p, std::size_t bytes) {
    if (offset_ + bytes > buffer_.size()) {
      std::ostringstream os;
      os << path_.string() << ": truncated, expected " << (offset_ + bytes)
         << " bytes but file has " << buffer_.size();
      throw IoError(os.str());
    }
    std::memcpy(p, buffer_.data() + offset_, bytes);
    offset_ += bytes;
  }
  std::filesystem::path path_;
  std::vector<char> buffer_;
  std::size_t offset_ = 0;
};

void check_finite_or_throw(const Matrix& m, const std::filesystem::path& path) {
  if (!m.allFinite()) {
    throw IoError(path.string() + ": payload contains non-finite values");
  }
}

}  // namespace

void write_dataset(const std::filesystem::path& path, const PermutedDataset& data) {
  BinaryWriter w(path);
  w.magic("MPD1");
  w.u32(1);  // version
  w.u32(data.n_classes);
  w.u32(static_cast<std::uint32_t>(data.inputs.cols()));
  w.u32(static_cast<std::uint32_t>(data.spec.sphere_dim));
  w.f64(data.spec.radius);
  w.u32(static_cast<std::uint32_t>(data.n_train()));
  w.u32(static_cast<std::uint32_t>(data.n_test()));
  w.f64(data.epsilon);
  w.u64(data.spec.seed);
  w.matrix_rowmajor(data.inputs);
  for (std::uint32_t v : data.true_labels) w.u32(v);
  for (std::uint32_t v : data.train_labels) w.u32(v);
  for (std::uint8_t v : data.permuted_mask) w.u8(v);
  w.matrix_rowmajor(data.test_inputs);
  for (std::uint32_t v : data.test_labels) w.u32(v);
  w.close();
}

PermutedDataset read_dataset(const std::filesystem::path& path) {
  BinaryReader r(path);
  r.expect_magic("MPD1", "dataset");
  const std::uint32_t version = r.u32();
  if (version != 1) {
    throw IoError(path.string() + ": unsupported dataset version " +
                  std::to_string(version));
  }
  PermutedDataset data;
  data.n_classes = r.u32();
  const auto dim = static_cast<Eigen::Index>(r.u32());
  data.spec.sphere_dim = static_cast<Eigen::Index>(r.u32());
  data.spec.radius = r.f64();
  const auto n_train = static_cast<Eigen::Index>(r.u32());
  const auto n_test = static_cast<Eigen::Index>(r.u32());
  data.epsilon = r.f64();
  data.spec.seed = r.u64();
  data.spec.n_classes = data.n_classes;
  data.spec.ambient_dim = dim;
  data.inputs = r.matrix_rowmajor(n_train, dim);
  data.true_labels.resize(static_cast<std::size_t>(n_train));
  for (auto& v : data.true_labels) v = r.u32();
  data.train_labels.resize(static_cast<std::size_t>(n_train));
  for (auto& v : data.train_labels) v = r.u32();
  data.permuted_mask.resize(static_cast<std::size_t>(n_train));
  for (auto& v : data.permuted_mask) v = r.u8();
  data.test_inputs = r.matrix_rowmajor(n_test, dim);
  data.test_labels.resize(static_cast<std::size_t>(n_test));
  for (auto& v : data.test_labels) v = r.u32();
  r.done();
  check_finite_or_throw(data.inputs, path);
  check_finite_or_throw(data.test_inputs, path);
  return data;
}

void write_dataset_csv(const std::filesystem::path& path,
                       const PermutedDataset& data) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << "split,index,true_label,train_label,permuted";
  for (Eigen::Index j = 0; j < data.inputs.cols(); ++j) out << ",f" << j;
  out << '\n';
  char buf[32];
  auto number = [&buf](double v) {
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return std::string(buf);
  };
  for (Eigen::Index i = 0; i < data.n_train(); ++i) {
    const auto u = static_cast<std::size_t>(i);
    out << "train," << i << ',' << data.true_labels[u] << ','
        << data.train_labels[u] << ',' << int(data.permuted_mask[u]);
    for (Eigen::Index j = 0; j < data.inputs.cols(); ++j) {
      out << ',' << number(data.inputs(i, j));
    }
    out << '\n';
  }
  for (Eigen::Index i = 0; i < data.n_test(); ++i) {
    const auto u = static_cast<std::size_t>(i);
    out << "test," << i << ',' << data.test_labels[u] << ','
        << data.test_labels[u] << ",0";
    for (Eigen::Index j = 0; j < data.test_inputs.cols(); ++j) {
      out << ',' << number(data.test_inputs(i, j));
    }
    out << '\n';
  }
  if (!out) throw IoError("write failed for " + path.string());
}

void write_model_snapshot(const std::filesystem::path& path,
                          const FeedforwardModel& model) {
  BinaryWriter w(path);
  w.magic("MPC1");
  w.u32(1);  // version
  w.u64(model.spec_hash);
  w.u32(static_cast<std::uint32_t>(model.epoch));
  w.u32(static_cast<std::uint32_t>(model.weights.size()));
  w.u32(static_cast<std::uint32_t>(model.biases.size()));
  for (const auto& weight : model.weights) {
    w.u32(static_cast<std::uint32_t>(weight.rows()));
    w.u32(static_cast<std::uint32_t>(weight.cols()));
    w.matrix_rowmajor(weight);
  }
  for (const auto& bias : model.biases) {
    w.u32(static_cast<std::uint32_t>(bias.size()));
    for (Eigen::Index i = 0; i < bias.size(); ++i) w.f64(bias[i]);
  }
  w.close();
}

FeedforwardModel read_model_snapshot(const std::filesystem::path& path) {
  BinaryReader r(path);
  r.expect_magic("MPC1", "model snapshot");
  const std::uint32_t version = r.u32();
  if (version != 1) {
    throw IoError(path.string() + ": unsupported snapshot version " +
                  std::to_string(version));
  }
  FeedforwardModel model;
  model.spec_hash = r.u64();
  model.epoch = static_cast<int>(r.u32());
  const std::uint32_t n_layers = r.u32();
  const std::uint32_t n_biases = r.u32();
  for (std::uint32_t l = 0; l < n_layers; ++l) {
    const auto rows = static_cast<Eigen::Index>(r.u32());
    const auto cols = static_cast<Eigen::Index>(r.u32());
    model.weights.push_back(r.matrix_rowmajor(rows, cols));
  }
  for (std::uint32_t l = 0; l < n_biases; ++l) {
    const auto size = static_cast<Eigen::Index>(r.u32());
    Vector b(size);
    for (Eigen::Index i = 0; i < size; ++i) b[i] = r.f64();
    model.biases.push_back(std::move(b));
  }
  r.done();
  for (const auto& w : model.weights) check_finite_or_throw(w, path);
  return model;
}

void write_activation_dump(const std::filesystem::path& path,
                           const ManifoldSet& set) {
  set.validate();
  const Eigen::Index m = set.manifolds.front().rows();
  for (const auto& manifold : set.manifolds) {
    if (manifold.rows() != m) {
      throw ConfigError(
          "activation dumps require the same point count per manifold");
    }
  }
  BinaryWriter w(path);
  w.magic("MFP1");
  w.u32(1);  // version
  w.u32(static_cast<std::uint32_t>(set.size()));
  w.u32(static_cast<std::uint32_t>(m));
  w.u32(static_cast<std::uint32_t>(set.ambient_dim));
  for (const auto& manifold : set.manifolds) w.matrix_rowmajor(manifold);
  for (std::uint32_t id : set.class_ids) w.u32(id);
  w.close();
}

ManifoldSet read_activation_dump(const std::filesystem::path& path) {
  BinaryReader r(path);
  r.expect_magic("MFP1", "activation dump");
  const std::uint32_t version = r.u32();
  if (version != 1) {
    throw IoError(path.string() + ": unsupported dump version " +
                  std::to_string(version));
  }
  const auto p = static_cast<Eigen::Index>(r.u32());
  const auto m = static_cast<Eigen::Index>(r.u32());
  const auto n = static_cast<Eigen::Index>(r.u32());
  ManifoldSet set;
  set.ambient_dim = n;
  for (Eigen::Index i = 0; i < p; ++i) {
    Matrix manifold = r.matrix_rowmajor(m, n);
    check_finite_or_throw(manifold, path);
    set.manifolds.push_back(std::move(manifold));
  }
  set.class_ids.resize(static_cast<std::size_t>(p));
  for (auto& id : set.class_ids) id = r.u32();
  r.done();
  set.validate();
  return set;
}

void write_activation_dump_csv(const std::filesystem::path& path,
                               const ManifoldSet& set) {
  set.validate();
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << "manifold,label";
  for (Eigen::Index j = 0; j < set.ambient_dim; ++j) out << ",f" << j;
  out << '\n';
  char buf[32];
  for (Eigen::Index i = 0; i < set.size(); ++i) {
    const Matrix& m = set.manifolds[static_cast<std::size_t>(i)];
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      out << i << ',' << set.class_ids[static_cast<std::size_t>(i)];
      for (Eigen::Index j = 0; j < m.cols(); ++j) {
        std::snprintf(buf, sizeof(buf), "%.17g", m(r, j));
        out << ',' << buf;
      }
      out << '\n';
    }
  }
  if (!out) throw IoError("write failed for " + path.string());
}

ManifoldSet read_activation_dump_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw IoError(path.string() + ": empty file");
  if (line.rfind("manifold,label", 0) != 0) {
    throw IoError(path.string() + ": missing manifold,label header");
  }

  std::vector<std::vector<Vector>> rows_by_manifold;
  std::vector<std::uint32_t> labels;
  Eigen::Index dim = -1;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::vector<double> values;
    while (std::getline(ss, cell, ',')) values.push_back(std::stod(cell));
    if (values.size() < 3) {
      throw IoError(path.string() + ": malformed row at line " +
                    std::to_string(line_no));
    }
    const auto manifold = static_cast<std::size_t>(values[0]);
    const auto label = static_cast<std::uint32_t>(values[1]);
    const auto n = static_cast<Eigen::Index>(values.size()) - 2;
    if (dim < 0) dim = n;
    if (n != dim) {
      throw IoError(path.string() + ": inconsistent feature count at line " +
                    std::to_string(line_no));
    }
    if (manifold >= rows_by_manifold.size()) {
      rows_by_manifold.resize(manifold + 1);
      labels.resize(manifold + 1, 0);
    }
    Vector v(n);
    for (Eigen::Index j = 0; j < n; ++j) v[j] = values[static_cast<std::size_t>(j) + 2];
    rows_by_manifold[manifold].push_back(std::move(v));
    labels[manifold] = label;
  }

  ManifoldSet set;
  set.ambient_dim = dim;
  for (std::size_t i = 0; i < rows_by_manifold.size(); ++i) {
    const auto& rows = rows_by_manifold[i];
    if (rows.empty()) {
      throw IoError(path.string() + ": manifold " + std::to_string(i) +
                    " has no rows");
    }
    Matrix m(static_cast<Eigen::Index>(rows.size()), dim);
    for (std::size_t r = 0; r < rows.size(); ++r) {
      m.row(static_cast<Eigen::Index>(r)) = rows[r].transpose();
    }
    set.manifolds.push_back(std::move(m));
    set.class_ids.push_back(labels[i]);
  }
  set.validate();
  return set;
}

}  // namespace mftma
