#include "ocdcvae/dataset.hpp"

#include "binary_io.hpp"
#include "ocdcvae/error.hpp"
#include "ocdcvae/rng.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

namespace ocdcvae {

namespace fs = std::filesystem;

std::vector<std::uint32_t> Dataset::indices_of(const std::vector<ClassId>& classes) const {
  const std::set<ClassId> wanted(classes.begin(), classes.end());
  std::vector<std::uint32_t> out;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (wanted.count(labels[i])) out.push_back(static_cast<std::uint32_t>(i));
  }
  return out;
}

void validate(const Dataset& d) {
  if (d.num_samples() == 0) throw DataError("dataset has no samples");
  if (d.attribute_dim() == 0) throw DataError("attribute dimension is zero");
  if (static_cast<Index>(d.labels.size()) != d.num_samples()) {
    throw DataError("label count " + std::to_string(d.labels.size()) + " != sample count " +
                    std::to_string(d.num_samples()));
  }
  if (!d.attributes.allFinite()) throw DataError("attribute matrix has non-finite entries");
  if (!d.features.allFinite()) throw DataError("feature matrix has non-finite entries");

  const auto C = static_cast<ClassId>(d.num_classes());
  std::set<ClassId> seen;
  for (ClassId c : d.seen_classes) {
    if (c >= C) throw DataError("seen class " + std::to_string(c) + " >= C");
    if (!seen.insert(c).second) throw DataError("seen class " + std::to_string(c) + " listed twice");
  }
  std::set<ClassId> unseen;
  for (ClassId c : d.unseen_classes) {
    if (c >= C) throw DataError("unseen class " + std::to_string(c) + " >= C");
    if (seen.count(c)) throw DataError("class " + std::to_string(c) + " is both seen and unseen");
    if (!unseen.insert(c).second) {
      throw DataError("unseen class " + std::to_string(c) + " listed twice");
    }
  }
  for (std::size_t i = 0; i < d.labels.size(); ++i) {
    const ClassId c = d.labels[i];
    if (c >= C) throw DataError("sample " + std::to_string(i) + " has class id >= C");
    if (!seen.count(c) && !unseen.count(c)) {
      throw DataError("sample " + std::to_string(i) + " has class " + std::to_string(c) +
                      " outside seen/unseen");
    }
  }
  for (auto idx : d.test_idx) {
    if (idx >= d.labels.size()) throw DataError("test_idx entry out of range");
  }
}

namespace {

std::vector<std::uint32_t> parse_ids(const std::string& rest, const std::string& where) {
  std::vector<std::uint32_t> out;
  std::istringstream in(rest);
  std::string tok;
  while (in >> tok) {
    std::size_t used = 0;
    unsigned long v = 0;
    try {
      v = std::stoul(tok, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != tok.size() || tok.front() == '-' || v > std::numeric_limits<std::uint32_t>::max()) {
      throw FormatError(where + ": bad id '" + tok + "'");
    }
    out.push_back(static_cast<std::uint32_t>(v));
  }
  return out;
}

void read_splits(const fs::path& path, Dataset& d) {
  std::ifstream in(path);
  if (!in) throw FormatError("missing file '" + path.string() + "'");
  std::string line;
  int lineno = 0;
  bool have_seen = false;
  bool have_unseen = false;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = "splits.txt line " + std::to_string(lineno);
    const auto colon = line.find(':');
    if (colon == std::string::npos) throw FormatError(where + ": expected 'key: ids'");
    std::string key = line.substr(0, colon);
    key.erase(0, key.find_first_not_of(" \t"));
    key.erase(key.find_last_not_of(" \t") + 1);
    auto ids = parse_ids(line.substr(colon + 1), where);
    if (key == "seen") {
      d.seen_classes = std::move(ids);
      have_seen = true;
    } else if (key == "unseen") {
      d.unseen_classes = std::move(ids);
      have_unseen = true;
    } else if (key == "test_idx") {
      d.test_idx = std::move(ids);
    } else {
      throw FormatError(where + ": unknown key '" + key + "'");
    }
  }
  if (!have_seen || !have_unseen) throw FormatError("splits.txt: needs both 'seen:' and 'unseen:'");
}

void write_ids(std::ostream& out, const char* key, const std::vector<std::uint32_t>& ids) {
  out << key << ':';
  for (auto id : ids) out << ' ' << id;
  out << '\n';
}

}  // namespace

Dataset load_dataset(const fs::path& dir) {
  Dataset d;
  {
    auto r = io::Reader::open(dir / "features.bin");
    r.expect_magic("ZSLF");
    const auto n = r.u32();
    const auto dx = r.u32();
    if (static_cast<std::uint64_t>(n) * dx * 4 != r.remaining()) {
      r.fail("payload size does not match " + std::to_string(n) + "x" + std::to_string(dx));
    }
    d.features.resize(n, dx);
    for (Index i = 0; i < d.features.size(); ++i) d.features.data()[i] = r.f32();
  }
  {
    auto r = io::Reader::open(dir / "labels.bin");
    r.expect_magic("ZSLL");
    const auto n = r.u32();
    if (n != d.features.rows()) r.fail("label count " + std::to_string(n) + " != feature rows");
    if (static_cast<std::uint64_t>(n) * 4 != r.remaining()) r.fail("payload size mismatch");
    d.labels.resize(n);
    for (auto& l : d.labels) l = r.u32();
  }
  {
    auto r = io::Reader::open(dir / "attributes.bin");
    r.expect_magic("ZSLA");
    const auto c = r.u32();
    const auto l = r.u32();
    if (static_cast<std::uint64_t>(c) * l * 4 != r.remaining()) {
      r.fail("payload size does not match " + std::to_string(c) + "x" + std::to_string(l));
    }
    d.attributes.resize(c, l);
    for (Index i = 0; i < d.attributes.size(); ++i) d.attributes.data()[i] = r.f32();
    for (std::size_t i = 0; i < d.labels.size(); ++i) {
      if (d.labels[i] >= c) {
        throw FormatError("labels.bin at offset " + std::to_string(12 + 4 * i) + ": class id " +
                          std::to_string(d.labels[i]) + " >= C = " + std::to_string(c));
      }
    }
  }
  read_splits(dir / "splits.txt", d);
  try {
    validate(d);
  } catch (const DataError& e) {
    throw FormatError(std::string("invalid dataset in '") + dir.string() + "': " + e.what());
  }
  return d;
}

void save_dataset(const Dataset& d, const fs::path& dir) {
  validate(d);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create '" + dir.string() + "': " + ec.message());

  io::Writer f;
  f.bytes("ZSLF");
  f.u32(static_cast<std::uint32_t>(d.features.rows()));
  f.u32(static_cast<std::uint32_t>(d.features.cols()));
  for (Index i = 0; i < d.features.size(); ++i) f.f32(static_cast<float>(d.features.data()[i]));
  f.save(dir / "features.bin");

  io::Writer l;
  l.bytes("ZSLL");
  l.u32(static_cast<std::uint32_t>(d.labels.size()));
  for (auto c : d.labels) l.u32(c);
  l.save(dir / "labels.bin");

  io::Writer a;
  a.bytes("ZSLA");
  a.u32(static_cast<std::uint32_t>(d.attributes.rows()));
  a.u32(static_cast<std::uint32_t>(d.attributes.cols()));
  for (Index i = 0; i < d.attributes.size(); ++i) a.f32(static_cast<float>(d.attributes.data()[i]));
  a.save(dir / "attributes.bin");

  std::ofstream s(dir / "splits.txt", std::ios::trunc);
  if (!s) throw IoError("cannot write splits.txt in '" + dir.string() + "'");
  write_ids(s, "seen", d.seen_classes);
  write_ids(s, "unseen", d.unseen_classes);
  if (!d.test_idx.empty()) write_ids(s, "test_idx", d.test_idx);
  if (!s) throw IoError("write failed for splits.txt");
}

void SynthConfig::validate() const {
  if (num_seen < 1 || num_unseen < 1) throw ParameterError("synth: need >= 1 seen and unseen class");
  if (samples_per_class < 1) throw ParameterError("synth: samples_per_class must be >= 1");
  if (feature_dim < 1 || attribute_dim < 1) throw ParameterError("synth: dimensions must be >= 1");
  if (!(class_spread > 0.0) || !(class_separation > 0.0)) {
    throw ParameterError("synth: class_spread and class_separation must be > 0");
  }
  if (!(attribute_noise >= 0.0)) throw ParameterError("synth: attribute_noise must be >= 0");
}

namespace {

enum Stream : std::uint64_t { kAttributes = 1, kProjection = 2, kCenterNoise = 3, kSamples = 4 };

Tensor2 synth_attributes(const SynthConfig& cfg) {
  Rng rng = Rng(cfg.seed).split(kAttributes);
  const Index C = cfg.num_seen + cfg.num_unseen;
  const double s = cfg.class_separation / std::sqrt(static_cast<double>(cfg.attribute_dim));
  Tensor2 a(C, cfg.attribute_dim);
  for (Index i = 0; i < a.size(); ++i) a.data()[i] = s * rng.normal();
  round_to_float32(a);
  return a;
}

}  // namespace

Tensor2 synthetic_feature_centers(const SynthConfig& cfg) {
  cfg.validate();
  const Tensor2 attrs = synth_attributes(cfg);
  Rng proj_rng = Rng(cfg.seed).split(kProjection);
  const double ps = 1.0 / std::sqrt(static_cast<double>(cfg.feature_dim));
  Tensor2 proj(cfg.attribute_dim, cfg.feature_dim);
  for (Index i = 0; i < proj.size(); ++i) proj.data()[i] = ps * proj_rng.normal();

  Rng noise_rng = Rng(cfg.seed).split(kCenterNoise);
  Tensor2 centers = attrs * proj;
  for (Index i = 0; i < centers.size(); ++i) {
    centers.data()[i] += cfg.attribute_noise * noise_rng.normal();
  }
  return centers;
}

Dataset make_synthetic(const SynthConfig& cfg) {
  cfg.validate();
  Dataset d;
  d.attributes = synth_attributes(cfg);
  const Tensor2 centers = synthetic_feature_centers(cfg);
  const Index C = centers.rows();
  const Index n = static_cast<Index>(C) * cfg.samples_per_class;

  Rng rng = Rng(cfg.seed).split(kSamples);
  d.features.resize(n, cfg.feature_dim);
  d.labels.resize(static_cast<std::size_t>(n));
  Index row = 0;
  for (Index c = 0; c < C; ++c) {
    for (std::uint32_t k = 0; k < cfg.samples_per_class; ++k, ++row) {
      for (Index j = 0; j < d.features.cols(); ++j) {
        d.features(row, j) = centers(c, j) + cfg.class_spread * rng.normal();
      }
      d.labels[static_cast<std::size_t>(row)] = static_cast<ClassId>(c);
    }
  }
  round_to_float32(d.features);
  for (ClassId c = 0; c < cfg.num_seen; ++c) d.seen_classes.push_back(c);
  for (ClassId c = cfg.num_seen; c < C; ++c) d.unseen_classes.push_back(c);
  return d;
}

GzslSplit split_gzsl(const Dataset& d, double ratio, std::uint64_t seed) {
  if (!(ratio > 0.0 && ratio < 1.0)) throw ParameterError("split ratio must lie in (0, 1)");
  GzslSplit split;
  std::vector<ClassId> seen = d.seen_classes;
  std::sort(seen.begin(), seen.end());
  const Rng base(seed);
  for (ClassId c : seen) {
    auto idx = d.indices_of({c});
    if (idx.size() < 2) {
      throw DataError("seen class " + std::to_string(c) + " has " + std::to_string(idx.size()) +
                      " samples; the 80/20 split needs at least 2");
    }
    Rng rng = base.split(c);
    shuffle(idx.begin(), idx.end(), rng);
    // The epsilon guards against products like 0.29 * 100 = 28.999...
    const auto n_train = static_cast<std::size_t>(std::floor(ratio * static_cast<double>(idx.size()) + 1e-9));
    split.train_seen_idx.insert(split.train_seen_idx.end(), idx.begin(), idx.begin() + n_train);
    split.test_seen_idx.insert(split.test_seen_idx.end(), idx.begin() + n_train, idx.end());
  }
  std::sort(split.train_seen_idx.begin(), split.train_seen_idx.end());
  std::sort(split.test_seen_idx.begin(), split.test_seen_idx.end());
  split.test_unseen_idx = d.indices_of(d.unseen_classes);
  return split;
}

GzslSplit resolve_split(const Dataset& d, double ratio, std::uint64_t seed) {
  if (d.test_idx.empty()) return split_gzsl(d, ratio, seed);
  GzslSplit split;
  const std::set<std::uint32_t> fixed(d.test_idx.begin(), d.test_idx.end());
  for (auto i : d.indices_of(d.seen_classes)) {
    (fixed.count(i) ? split.test_seen_idx : split.train_seen_idx).push_back(i);
  }
  for (auto i : d.indices_of(d.unseen_classes)) {
    if (fixed.count(i)) split.test_unseen_idx.push_back(i);
  }
  return split;
}

}  // namespace ocdcvae
