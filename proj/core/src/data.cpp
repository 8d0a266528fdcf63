#include <gzood/data.hpp>
#include <gzood/error.hpp>

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>

namespace gzood::data {

namespace fs = std::filesystem;

static_assert(std::endian::native == std::endian::little, "bundle I/O assumes a little-endian host");

namespace {

using Kind = DataError::Kind;

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r");
  if (begin == std::string::npos) return {};
  const auto end = s.find_last_not_of(" \t\r");
  return s.substr(begin, end - begin + 1);
}

std::map<std::string, std::string> read_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError(Kind::MissingFile, "bundle manifest not found: " + path.string());
  std::map<std::string, std::string> kv;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw DataError(Kind::Malformed, path.string() + ":" + std::to_string(lineno) + ": expected key = value");
    }
    kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  return kv;
}

const std::string& require(const std::map<std::string, std::string>& kv, const std::string& key) {
  const auto it = kv.find(key);
  if (it == kv.end()) throw DataError(Kind::Malformed, "manifest is missing key '" + key + "'");
  return it->second;
}

Index require_count(const std::map<std::string, std::string>& kv, const std::string& key) {
  const std::string& text = require(kv, key);
  try {
    std::size_t used = 0;
    const long long v = std::stoll(text, &used);
    if (used != text.size() || v < 0) throw std::invalid_argument(key);
    return static_cast<Index>(v);
  } catch (const std::logic_error&) {
    throw DataError(Kind::Malformed, "manifest key '" + key + "' is not a nonnegative integer: " + text);
  }
}

template <typename T>
std::vector<T> read_array(const fs::path& path, Index expected) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError(Kind::MissingFile, "bundle array not found: " + path.string());
  in.seekg(0, std::ios::end);
  const auto bytes = static_cast<Index>(in.tellg());
  if (bytes != expected * static_cast<Index>(sizeof(T))) {
    throw DataError(Kind::ShapeMismatch, path.filename().string() + ": expected " + std::to_string(expected) +
                                             " elements (" + std::to_string(expected * sizeof(T)) + " bytes), found " +
                                             std::to_string(bytes) + " bytes");
  }
  in.seekg(0);
  std::vector<T> out(static_cast<std::size_t>(expected));
  in.read(reinterpret_cast<char*>(out.data()), static_cast<std::streamsize>(bytes));
  if (!in) throw DataError(Kind::Malformed, "failed reading " + path.string());
  return out;
}

template <typename T>
void write_array(const fs::path& path, const T* data, Index count) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError(Kind::MissingFile, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(count * sizeof(T)));
  if (!out) throw DataError(Kind::Malformed, "failed writing " + path.string());
}

void check_class_set(const std::vector<std::int64_t>& ids, Index num_classes, const char* name) {
  std::set<std::int64_t> seen;
  for (auto id : ids) {
    if (id < 0 || id >= num_classes) {
      throw DataError(Kind::LabelOutOfRange,
                      std::string(name) + " contains class " + std::to_string(id) + " outside [0, " +
                          std::to_string(num_classes) + ")");
    }
    if (!seen.insert(id).second) {
      throw DataError(Kind::Malformed, std::string(name) + " lists class " + std::to_string(id) + " twice");
    }
  }
}

}  // namespace

void DatasetBundle::validate() const {
  const Index n = features.rows();
  if (static_cast<Index>(labels.size()) != n) {
    throw DataError(Kind::ShapeMismatch, "labels has " + std::to_string(labels.size()) + " entries for " +
                                             std::to_string(n) + " feature rows");
  }
  if (attributes.rows() < 1 || attributes.cols() < 1) throw DataError(Kind::ShapeMismatch, "attribute matrix is empty");
  if (features.cols() < 1) throw DataError(Kind::ShapeMismatch, "feature matrix has no columns");
  if (!features.allFinite() || !attributes.allFinite()) throw DataError(Kind::Malformed, "non-finite feature or attribute value");

  const Index c = attributes.rows();
  for (Index i = 0; i < n; ++i) {
    if (labels[static_cast<std::size_t>(i)] < 0 || labels[static_cast<std::size_t>(i)] >= c) {
      throw DataError(Kind::LabelOutOfRange, "label of row " + std::to_string(i) + " (" +
                                                 std::to_string(labels[static_cast<std::size_t>(i)]) +
                                                 ") is outside [0, " + std::to_string(c) + ")");
    }
  }
  check_class_set(seen_classes, c, "seen_classes");
  check_class_set(unseen_classes, c, "unseen_classes");
  if (seen_classes.empty()) throw DataError(Kind::Malformed, "no seen classes");
  const std::set<std::int64_t> seen(seen_classes.begin(), seen_classes.end());
  const std::set<std::int64_t> unseen(unseen_classes.begin(), unseen_classes.end());
  for (auto id : unseen) {
    if (seen.count(id)) {
      throw DataError(Kind::OverlappingSplits, "class " + std::to_string(id) + " is both seen and unseen");
    }
  }

  std::vector<char> used(static_cast<std::size_t>(n), 0);
  auto check_split = [&](const std::vector<std::int64_t>& idx, const std::set<std::int64_t>& allowed,
                         const char* name, const char* allowed_name) {
    for (auto row : idx) {
      if (row < 0 || row >= n) {
        throw DataError(Kind::IndexOutOfRange, std::string(name) + " index " + std::to_string(row) +
                                                   " is outside [0, " + std::to_string(n) + ")");
      }
      auto& flag = used[static_cast<std::size_t>(row)];
      if (flag) {
        throw DataError(Kind::OverlappingSplits,
                        "row " + std::to_string(row) + " appears more than once across split index lists (" + name + ")");
      }
      flag = 1;
      const auto label = labels[static_cast<std::size_t>(row)];
      if (!allowed.count(label)) {
        throw DataError(Kind::OverlappingSplits, std::string(name) + " row " + std::to_string(row) + " has class " +
                                                     std::to_string(label) + " which is not in " + allowed_name);
      }
    }
  };
  check_split(train_idx, seen, "train_idx", "seen_classes");
  check_split(test_seen_idx, seen, "test_seen_idx", "seen_classes");
  check_split(test_unseen_idx, unseen, "test_unseen_idx", "unseen_classes");
}

Matrix DatasetBundle::feature_rows(const std::vector<std::int64_t>& rows) const {
  Matrix out(static_cast<Index>(rows.size()), features.cols());
  for (std::size_t k = 0; k < rows.size(); ++k) out.row(static_cast<Index>(k)) = features.row(rows[k]).cast<double>();
  return out;
}

Matrix DatasetBundle::attribute_rows(const std::vector<std::int64_t>& class_ids) const {
  Matrix out(static_cast<Index>(class_ids.size()), attributes.cols());
  for (std::size_t k = 0; k < class_ids.size(); ++k) {
    out.row(static_cast<Index>(k)) = attributes.row(class_ids[k]).cast<double>();
  }
  return out;
}

std::vector<int> DatasetBundle::label_rows(const std::vector<std::int64_t>& rows) const {
  std::vector<int> out;
  out.reserve(rows.size());
  for (auto r : rows) out.push_back(static_cast<int>(labels[static_cast<std::size_t>(r)]));
  return out;
}

DatasetBundle load_bundle(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw DataError(Kind::MissingFile, "bundle directory not found: " + dir.string());
  const auto kv = read_manifest(dir / "manifest.txt");
  if (require(kv, "format") != "gzood-bundle") throw DataError(Kind::Malformed, "manifest format is not gzood-bundle");
  if (require(kv, "version") != "1") throw DataError(Kind::Malformed, "unsupported bundle version");
  if (require(kv, "dtype") != "float32-le" || require(kv, "index_dtype") != "int64-le") {
    throw DataError(Kind::Malformed, "unsupported bundle dtype");
  }
  const Index n = require_count(kv, "num_samples");
  const Index d = require_count(kv, "feature_dim");
  const Index c = require_count(kv, "num_classes");
  const Index a = require_count(kv, "attribute_dim");

  DatasetBundle b;
  const auto features = read_array<float>(dir / require(kv, "features"), n * d);
  b.features = Eigen::Map<const FloatMatrix>(features.data(), n, d);
  b.labels = read_array<std::int64_t>(dir / require(kv, "labels"), n);
  const auto attributes = read_array<float>(dir / require(kv, "attributes"), c * a);
  b.attributes = Eigen::Map<const FloatMatrix>(attributes.data(), c, a);
  b.seen_classes = read_array<std::int64_t>(dir / require(kv, "seen_classes"), require_count(kv, "num_seen"));
  b.unseen_classes = read_array<std::int64_t>(dir / require(kv, "unseen_classes"), require_count(kv, "num_unseen"));
  b.train_idx = read_array<std::int64_t>(dir / require(kv, "train_idx"), require_count(kv, "num_train"));
  b.test_seen_idx = read_array<std::int64_t>(dir / require(kv, "test_seen_idx"), require_count(kv, "num_test_seen"));
  b.test_unseen_idx =
      read_array<std::int64_t>(dir / require(kv, "test_unseen_idx"), require_count(kv, "num_test_unseen"));
  b.validate();
  return b;
}

void save_bundle(const fs::path& dir, const DatasetBundle& b) {
  b.validate();
  fs::create_directories(dir);
  std::ostringstream manifest;
  manifest << "format = gzood-bundle\n"
           << "version = 1\n"
           << "dtype = float32-le\n"
           << "index_dtype = int64-le\n"
           << "num_samples = " << b.num_samples() << "\n"
           << "feature_dim = " << b.feature_dim() << "\n"
           << "num_classes = " << b.num_classes() << "\n"
           << "attribute_dim = " << b.attribute_dim() << "\n"
           << "num_seen = " << b.seen_classes.size() << "\n"
           << "num_unseen = " << b.unseen_classes.size() << "\n"
           << "num_train = " << b.train_idx.size() << "\n"
           << "num_test_seen = " << b.test_seen_idx.size() << "\n"
           << "num_test_unseen = " << b.test_unseen_idx.size() << "\n"
           << "features = features.f32\n"
           << "labels = labels.i64\n"
           << "attributes = attributes.f32\n"
           << "seen_classes = seen_classes.i64\n"
           << "unseen_classes = unseen_classes.i64\n"
           << "train_idx = train_idx.i64\n"
           << "test_seen_idx = test_seen_idx.i64\n"
           << "test_unseen_idx = test_unseen_idx.i64\n";
  write_array(dir / "features.f32", b.features.data(), b.features.size());
  write_array(dir / "labels.i64", b.labels.data(), static_cast<Index>(b.labels.size()));
  write_array(dir / "attributes.f32", b.attributes.data(), b.attributes.size());
  write_array(dir / "seen_classes.i64", b.seen_classes.data(), static_cast<Index>(b.seen_classes.size()));
  write_array(dir / "unseen_classes.i64", b.unseen_classes.data(), static_cast<Index>(b.unseen_classes.size()));
  write_array(dir / "train_idx.i64", b.train_idx.data(), static_cast<Index>(b.train_idx.size()));
  write_array(dir / "test_seen_idx.i64", b.test_seen_idx.data(), static_cast<Index>(b.test_seen_idx.size()));
  write_array(dir / "test_unseen_idx.i64", b.test_unseen_idx.data(), static_cast<Index>(b.test_unseen_idx.size()));
  // Manifest last: a directory with a manifest is a complete bundle.
  std::ofstream out(dir / "manifest.txt", std::ios::trunc);
  out << manifest.str();
  if (!out) throw DataError(Kind::Malformed, "failed writing manifest in " + dir.string());
}

void SyntheticSpec::validate() const {
  if (n_seen < 2) throw InvalidArgument("synthetic spec needs n_seen >= 2");
  if (n_unseen < 1 || attr_dim < 1 || feat_dim < 1 || samples_per_class < 1) {
    throw InvalidArgument("synthetic spec counts must be >= 1");
  }
  if (!(noise_scale >= 0.0)) throw InvalidArgument("synthetic noise_scale must be >= 0");
}

DatasetBundle make_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const int classes = spec.n_seen + spec.n_unseen;

  Matrix attributes(classes, spec.attr_dim);
  for (int c = 0; c < classes; ++c) {
    Vector a(spec.attr_dim);
    do {
      for (int k = 0; k < spec.attr_dim; ++k) a[k] = normal(rng);
    } while (a.norm() == 0.0);
    attributes.row(c) = a.normalized().transpose();
  }
  Matrix lift(spec.feat_dim, spec.attr_dim);
  for (Index i = 0; i < lift.size(); ++i) lift.data()[i] = normal(rng);
  Vector offset(spec.feat_dim);
  for (int k = 0; k < spec.feat_dim; ++k) offset[k] = normal(rng);

  DatasetBundle b;
  const Index n = static_cast<Index>(classes) * spec.samples_per_class;
  b.features.resize(n, spec.feat_dim);
  b.labels.resize(static_cast<std::size_t>(n));
  b.attributes = attributes.cast<float>();
  const int n_train = std::clamp(static_cast<int>(std::lround(0.8 * spec.samples_per_class)), 1,
                                 spec.samples_per_class);
  Index row = 0;
  for (int c = 0; c < classes; ++c) {
    const Vector a = b.attributes.row(c).cast<double>().transpose();
    for (int s = 0; s < spec.samples_per_class; ++s, ++row) {
      Vector h = a;
      for (int k = 0; k < spec.attr_dim; ++k) h[k] += spec.noise_scale * normal(rng);
      b.features.row(row) = (lift * h + offset).cast<float>().transpose();
      b.labels[static_cast<std::size_t>(row)] = c;
      if (c < spec.n_seen) {
        (s < n_train ? b.train_idx : b.test_seen_idx).push_back(row);
      } else {
        b.test_unseen_idx.push_back(row);
      }
    }
  }
  for (int c = 0; c < spec.n_seen; ++c) b.seen_classes.push_back(c);
  for (int c = spec.n_seen; c < classes; ++c) b.unseen_classes.push_back(c);
  b.validate();
  return b;
}

DatasetBundle standardize(const DatasetBundle& bundle) {
  bundle.validate();
  if (bundle.train_idx.empty()) throw DataError(Kind::Malformed, "cannot standardize without train rows");
  const Matrix train = bundle.feature_rows(bundle.train_idx);
  const Eigen::RowVectorXd mean = train.colwise().mean();
  Eigen::RowVectorXd scale = ((train.rowwise() - mean).array().square().colwise().mean()).sqrt().matrix();
  for (Index k = 0; k < scale.size(); ++k) {
    if (!(scale[k] > 0.0)) scale[k] = 1.0;
  }
  DatasetBundle out = bundle;
  out.features = ((bundle.features.cast<double>().rowwise() - mean).array().rowwise() / scale.array())
                     .matrix()
                     .cast<float>();
  return out;
}

}  // namespace gzood::data
