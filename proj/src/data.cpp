#include "fedclust/data.hpp"

#include "fedclust/algorithms.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <numeric>
#include <sstream>

namespace fedclust {

SyntheticData gen_synthetic(const SyntheticSpec& spec) {
  if (spec.m < 1 || spec.n < 1 || spec.k < 1) throw std::invalid_argument("dimensions must be positive");
  if (spec.k > spec.n) throw std::invalid_argument("more clusters than samples");
  if (spec.k > spec.m) throw std::invalid_argument("more clusters than features");
  if (std::isnan(spec.snr_db) || spec.snr_db == -std::numeric_limits<double>::infinity()) {
    throw std::invalid_argument("snr_db must be finite or +infinity");
  }

  Rng rng = Rng(spec.seed).substream(stream::kData);
  SyntheticData out;
  out.w_true.resize(spec.m, spec.k);
  for (Index j = 0; j < spec.k; ++j) {
    for (Index i = 0; i < spec.m; ++i) out.w_true(i, j) = rng.uniform();
  }
  out.labels.resize(std::size_t(spec.n));
  for (auto& l : out.labels) l = int(rng.below(std::size_t(spec.k)));

  out.x.resize(spec.m, spec.n);
  for (Index j = 0; j < spec.n; ++j) out.x.col(j) = out.w_true.col(out.labels[std::size_t(j)]);
  if (std::isinf(spec.snr_db)) return out;

  Matrix noise(spec.m, spec.n);
  for (Index j = 0; j < spec.n; ++j) {
    for (Index i = 0; i < spec.m; ++i) noise(i, j) = rng.normal();
  }
  const double signal = out.x.squaredNorm();
  const double target = signal / std::pow(10.0, spec.snr_db / 10.0);
  noise *= std::sqrt(target / noise.squaredNorm());
  out.x += noise;
  return out;
}

std::string_view to_string(PartitionScheme scheme) {
  switch (scheme) {
    case PartitionScheme::UniformIID: return "uniform_iid";
    case PartitionScheme::SimilarityKMeans: return "similarity_kmeans";
    case PartitionScheme::TwoClassPowerLaw: return "two_class_power_law";
    case PartitionScheme::TwoClassBalanced: return "two_class_balanced";
  }
  return "unknown";
}

PartitionScheme parse_partition_scheme(std::string_view name) {
  for (auto s : {PartitionScheme::UniformIID, PartitionScheme::SimilarityKMeans,
                 PartitionScheme::TwoClassPowerLaw, PartitionScheme::TwoClassBalanced}) {
    if (name == to_string(s)) return s;
  }
  throw std::invalid_argument("unknown partition scheme '" + std::string(name) + "'");
}

namespace {

std::vector<DataShard> build_shards(const Matrix& x, const std::vector<int>& labels,
                                    const std::vector<std::vector<Index>>& members) {
  std::vector<DataShard> shards;
  shards.reserve(members.size());
  for (const auto& idx : members) {
    if (idx.empty()) throw std::invalid_argument("partition produced an empty client");
    DataShard s;
    s.x.resize(x.rows(), Index(idx.size()));
    for (std::size_t j = 0; j < idx.size(); ++j) s.x.col(Index(j)) = x.col(idx[j]);
    if (!labels.empty()) {
      for (auto i : idx) s.labels.push_back(labels[std::size_t(i)]);
    }
    s.omega = double(idx.size()) / double(x.cols());
    shards.push_back(std::move(s));
  }
  return shards;
}

/// Splits `total` items over slots proportionally to `weights` by largest
/// remainder, giving every slot at least `floor_each` when possible.
std::vector<Index> apportion(Index total, const std::vector<double>& weights, Index floor_each) {
  const std::size_t n = weights.size();
  std::vector<Index> counts(n, 0);
  if (n == 0) return counts;
  const Index reserved = std::min<Index>(total, floor_each * Index(n));
  for (std::size_t i = 0; i < n && Index(i) * floor_each < reserved; ++i) {
    counts[i] = std::min<Index>(floor_each, reserved - Index(i) * floor_each);
  }
  const Index rest = total - reserved;
  const double wsum = std::accumulate(weights.begin(), weights.end(), 0.0);
  std::vector<std::pair<double, std::size_t>> remainders;
  Index given = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double exact = double(rest) * weights[i] / wsum;
    const auto whole = Index(std::floor(exact));
    counts[i] += whole;
    given += whole;
    remainders.emplace_back(exact - double(whole), i);
  }
  std::stable_sort(remainders.begin(), remainders.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  for (Index r = 0; r < rest - given; ++r) ++counts[remainders[std::size_t(r) % n].second];
  return counts;
}

std::vector<std::vector<Index>> split_uniform(Index n, std::size_t clients, Rng& rng) {
  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  std::shuffle(order.begin(), order.end(), rng.engine());
  std::vector<std::vector<Index>> members(clients);
  const Index base = n / Index(clients);
  const Index extra = n % Index(clients);
  Index at = 0;
  for (std::size_t p = 0; p < clients; ++p) {
    const Index size = base + (Index(p) < extra ? 1 : 0);
    members[p].assign(order.begin() + at, order.begin() + at + size);
    at += size;
  }
  return members;
}

std::vector<std::vector<Index>> split_similarity(const Matrix& x, std::size_t clients, Rng& rng) {
  auto km = run_kmeanspp(x, int(clients), rng);
  std::vector<std::vector<Index>> members(clients);
  for (Index j = 0; j < x.cols(); ++j) members[std::size_t(km.labels[std::size_t(j)])].push_back(j);
  // Re-seed empty clusters with the farthest member of the largest cluster.
  for (auto& target : members) {
    if (!target.empty()) continue;
    auto largest = std::max_element(members.begin(), members.end(),
                                     [](const auto& a, const auto& b) { return a.size() < b.size(); });
    const auto c = std::distance(members.begin(), largest);
    auto far = std::max_element(largest->begin(), largest->end(), [&](Index a, Index b) {
      return (x.col(a) - km.centroids.col(c)).squaredNorm() <
             (x.col(b) - km.centroids.col(c)).squaredNorm();
    });
    target.push_back(*far);
    largest->erase(far);
  }
  return members;
}

std::vector<std::vector<Index>> split_two_class(const std::vector<int>& labels,
                                                std::size_t clients, bool power_law,
                                                double exponent, Rng& rng) {
  if (labels.empty()) throw std::invalid_argument("two-class partition needs labels");
  const int classes = *std::max_element(labels.begin(), labels.end()) + 1;
  if (classes < 2) throw std::invalid_argument("two-class partition needs at least two classes");

  // Target client sizes: equal, or proportional to rank^-exponent over a
  // random rank order.
  std::vector<double> target(clients, 1.0);
  if (power_law) {
    std::vector<std::size_t> rank(clients);
    std::iota(rank.begin(), rank.end(), std::size_t{1});
    std::shuffle(rank.begin(), rank.end(), rng.engine());
    for (std::size_t p = 0; p < clients; ++p) target[p] = std::pow(double(rank[p]), -exponent);
  }

  // Client p holds classes a = p mod C and b = a + offset, offset in [1, C-1].
  std::vector<std::vector<std::pair<std::size_t, double>>> slots(static_cast<std::size_t>(classes));
  for (std::size_t p = 0; p < clients; ++p) {
    const int a = int(p % std::size_t(classes));
    const int offset = 1 + int((p / std::size_t(classes)) % std::size_t(classes - 1));
    const int b = (a + offset) % classes;
    slots[std::size_t(a)].emplace_back(p, 0.5 * target[p]);
    slots[std::size_t(b)].emplace_back(p, 0.5 * target[p]);
  }

  std::vector<std::vector<Index>> by_class(static_cast<std::size_t>(classes));
  for (std::size_t j = 0; j < labels.size(); ++j) {
    if (labels[j] < 0) throw std::invalid_argument("negative label");
    by_class[std::size_t(labels[j])].push_back(Index(j));
  }

  std::vector<std::vector<Index>> members(clients);
  for (int c = 0; c < classes; ++c) {
    auto& pool = by_class[std::size_t(c)];
    const auto& holders = slots[std::size_t(c)];
    if (holders.empty()) continue;
    std::shuffle(pool.begin(), pool.end(), rng.engine());
    std::vector<double> weights;
    for (const auto& h : holders) weights.push_back(h.second);
    const auto counts = apportion(Index(pool.size()), weights, 1);
    Index at = 0;
    for (std::size_t i = 0; i < holders.size(); ++i) {
      auto& dst = members[holders[i].first];
      dst.insert(dst.end(), pool.begin() + at, pool.begin() + at + counts[i]);
      at += counts[i];
    }
  }
  for (auto& m : members) std::sort(m.begin(), m.end());
  return members;
}

}  // namespace

std::vector<DataShard> partition(const Matrix& x, const std::vector<int>& labels,
                                 const PartitionSpec& spec, Rng& rng) {
  if (spec.clients < 1) throw std::invalid_argument("need at least one client");
  if (Index(spec.clients) > x.cols()) throw std::invalid_argument("more clients than samples");
  if (!labels.empty() && Index(labels.size()) != x.cols()) {
    throw std::invalid_argument("label count does not match sample count");
  }
  std::vector<std::vector<Index>> members;
  switch (spec.scheme) {
    case PartitionScheme::UniformIID:
      members = split_uniform(x.cols(), spec.clients, rng);
      break;
    case PartitionScheme::SimilarityKMeans:
      members = split_similarity(x, spec.clients, rng);
      break;
    case PartitionScheme::TwoClassPowerLaw:
    case PartitionScheme::TwoClassBalanced:
      members = split_two_class(labels, spec.clients,
                                spec.scheme == PartitionScheme::TwoClassPowerLaw,
                                spec.power_law_exponent, rng);
      break;
  }
  return build_shards(x, labels, members);
}

// Matrix files --------------------------------------------------------------

namespace {

constexpr std::array<char, 4> kMagic = {'F', 'M', 'C', '1'};
constexpr std::size_t kBinaryHeader = 4 + 4 + 4 + 1;

void write_u32(std::ostream& out, std::uint32_t v) {
  std::array<char, 4> b;
  for (int i = 0; i < 4; ++i) b[std::size_t(i)] = char((v >> (8 * i)) & 0xFF);
  out.write(b.data(), 4);
}

std::uint32_t read_u32(const unsigned char* p) {
  return std::uint32_t(p[0]) | std::uint32_t(p[1]) << 8 | std::uint32_t(p[2]) << 16 |
         std::uint32_t(p[3]) << 24;
}

void check_label_count(const Matrix& x, const std::vector<int>& labels) {
  if (!labels.empty() && Index(labels.size()) != x.cols()) {
    throw std::invalid_argument("label count does not match column count");
  }
}

bool is_csv(const std::filesystem::path& path) { return path.extension() == ".csv"; }

}  // namespace

void save_matrix_binary(const std::filesystem::path& path, const Matrix& x,
                        const std::vector<int>& labels) {
  check_label_count(x, labels);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError(FormatError::Kind::Io, "cannot open " + path.string() + " for writing");
  out.write(kMagic.data(), 4);
  write_u32(out, std::uint32_t(x.rows()));
  write_u32(out, std::uint32_t(x.cols()));
  out.put(labels.empty() ? 0 : 1);
  out.write(reinterpret_cast<const char*>(x.data()), std::streamsize(x.size() * sizeof(double)));
  for (int l : labels) write_u32(out, std::uint32_t(l));
  if (!out) throw FormatError(FormatError::Kind::Io, "write failed for " + path.string());
}

LabelledMatrix load_matrix_binary(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError(FormatError::Kind::Io, "cannot open " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.size() < kBinaryHeader) {
    throw FormatError(FormatError::Kind::MalformedHeader, "file shorter than header");
  }
  if (std::memcmp(bytes.data(), kMagic.data(), 4) != 0) {
    throw FormatError(FormatError::Kind::MalformedHeader, "bad magic, expected FMC1");
  }
  const std::uint64_t m = read_u32(bytes.data() + 4);
  const std::uint64_t n = read_u32(bytes.data() + 8);
  const unsigned has_labels = bytes[12];
  if (has_labels > 1) throw FormatError(FormatError::Kind::MalformedHeader, "has_labels must be 0 or 1");
  if (m == 0 || n == 0) throw FormatError(FormatError::Kind::MalformedHeader, "zero dimension");
  const std::uint64_t limit = std::uint64_t(std::numeric_limits<std::ptrdiff_t>::max()) / 16;
  if (m * n > limit) {
    throw FormatError(FormatError::Kind::DimensionOverflow,
                      "dimensions " + std::to_string(m) + "x" + std::to_string(n) + " too large");
  }
  const std::uint64_t need = kBinaryHeader + m * n * 8 + (has_labels ? n * 4 : 0);
  if (bytes.size() < need) {
    throw FormatError(FormatError::Kind::TruncatedPayload,
                      "payload truncated: need " + std::to_string(need) + " bytes, have " +
                          std::to_string(bytes.size()));
  }
  LabelledMatrix out;
  out.x.resize(Index(m), Index(n));
  std::memcpy(out.x.data(), bytes.data() + kBinaryHeader, std::size_t(m * n * 8));
  if (has_labels) {
    const unsigned char* p = bytes.data() + kBinaryHeader + m * n * 8;
    out.labels.resize(std::size_t(n));
    for (std::size_t j = 0; j < n; ++j) {
      const std::uint32_t l = read_u32(p + 4 * j);
      if (l > std::uint32_t(std::numeric_limits<int>::max())) {
        throw FormatError(FormatError::Kind::MalformedHeader, "label out of range");
      }
      out.labels[j] = int(l);
    }
  }
  return out;
}

void save_matrix_csv(const std::filesystem::path& path, const Matrix& x,
                     const std::vector<int>& labels) {
  check_label_count(x, labels);
  std::ofstream out(path);
  if (!out) throw FormatError(FormatError::Kind::Io, "cannot open " + path.string() + " for writing");
  out << x.rows() << ',' << x.cols() << ',' << (labels.empty() ? 0 : 1) << '\n';
  char buf[40];
  for (Index i = 0; i < x.rows(); ++i) {
    for (Index j = 0; j < x.cols(); ++j) {
      std::snprintf(buf, sizeof buf, "%.17g", x(i, j));
      out << (j ? "," : "") << buf;
    }
    out << '\n';
  }
  if (!labels.empty()) {
    for (std::size_t j = 0; j < labels.size(); ++j) out << (j ? "," : "") << labels[j];
    out << '\n';
  }
  if (!out) throw FormatError(FormatError::Kind::Io, "write failed for " + path.string());
}

namespace {

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> fields;
  std::stringstream ss(line);
  std::string f;
  while (std::getline(ss, f, ',')) fields.push_back(f);
  if (!line.empty() && line.back() == ',') fields.emplace_back();
  return fields;
}

bool parse_double(const std::string& s, double& v) {
  if (s.empty()) return false;
  char* end = nullptr;
  v = std::strtod(s.c_str(), &end);
  while (end && (*end == ' ' || *end == '\r')) ++end;
  return end && *end == '\0';
}

bool parse_uint(const std::string& s, std::uint64_t& v) {
  double d;
  if (!parse_double(s, d) || d < 0 || d != std::floor(d) || d > 1.8e19) return false;
  v = std::uint64_t(d);
  return true;
}

}  // namespace

LabelledMatrix load_matrix_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError(FormatError::Kind::Io, "cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw FormatError(FormatError::Kind::MalformedHeader, "empty file");
  const auto header = split_fields(line);
  std::uint64_t m = 0, n = 0, has_labels = 0;
  if (header.size() != 3 || !parse_uint(header[0], m) || !parse_uint(header[1], n) ||
      !parse_uint(header[2], has_labels) || has_labels > 1 || m == 0 || n == 0) {
    throw FormatError(FormatError::Kind::MalformedHeader, "header must be M,N,has_labels");
  }
  if (m > 0xFFFFFFFFull || n > 0xFFFFFFFFull ||
      m * n > std::uint64_t(std::numeric_limits<std::ptrdiff_t>::max()) / 16) {
    throw FormatError(FormatError::Kind::DimensionOverflow, "dimensions too large");
  }
  LabelledMatrix out;
  out.x.resize(Index(m), Index(n));
  for (std::uint64_t i = 0; i < m; ++i) {
    if (!std::getline(in, line)) {
      throw FormatError(FormatError::Kind::TruncatedPayload,
                        "expected " + std::to_string(m) + " data rows, found " + std::to_string(i));
    }
    const auto fields = split_fields(line);
    if (fields.size() != n) {
      throw FormatError(FormatError::Kind::TruncatedPayload,
                        "row " + std::to_string(i + 1) + " has " + std::to_string(fields.size()) +
                            " values, expected " + std::to_string(n));
    }
    for (std::uint64_t j = 0; j < n; ++j) {
      double v;
      if (!parse_double(fields[j], v)) {
        throw FormatError(FormatError::Kind::MalformedHeader,
                          "unparseable value '" + fields[j] + "' in row " + std::to_string(i + 1));
      }
      out.x(Index(i), Index(j)) = v;
    }
  }
  if (has_labels) {
    if (!std::getline(in, line)) throw FormatError(FormatError::Kind::TruncatedPayload, "missing label row");
    const auto fields = split_fields(line);
    if (fields.size() != n) throw FormatError(FormatError::Kind::TruncatedPayload, "label row too short");
    for (const auto& f : fields) {
      std::uint64_t l;
      if (!parse_uint(f, l) || l > std::uint64_t(std::numeric_limits<int>::max())) {
        throw FormatError(FormatError::Kind::MalformedHeader, "bad label '" + f + "'");
      }
      out.labels.push_back(int(l));
    }
  }
  return out;
}

void save_matrix(const std::filesystem::path& path, const Matrix& x, const std::vector<int>& labels) {
  if (is_csv(path)) {
    save_matrix_csv(path, x, labels);
  } else {
    save_matrix_binary(path, x, labels);
  }
}

LabelledMatrix load_matrix(const std::filesystem::path& path) {
  return is_csv(path) ? load_matrix_csv(path) : load_matrix_binary(path);
}

}  // namespace fedclust
