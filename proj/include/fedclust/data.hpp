#ifndef FEDCLUST_DATA_HPP
#define FEDCLUST_DATA_HPP

#include "fedclust/model.hpp"

#include <filesystem>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace fedclust {

struct SyntheticSpec {
  Index m = 50;
  Index n = 500;
  Index k = 5;
  /// 10 log10(||W H||^2 / ||E||^2); +infinity means noiseless.
  double snr_db = -3.0;
  std::uint64_t seed = 0;
};

struct SyntheticData {
  Matrix x;
  std::vector<int> labels;  // 0-based
  Matrix w_true;
};

/// X = W H + E with W uniform in [0,1], one-hot H with uniform labels and
/// Gaussian E rescaled so the signal-to-noise ratio equals snr_db exactly.
SyntheticData gen_synthetic(const SyntheticSpec& spec);

enum class PartitionScheme { UniformIID, SimilarityKMeans, TwoClassPowerLaw, TwoClassBalanced };

std::string_view to_string(PartitionScheme scheme);
PartitionScheme parse_partition_scheme(std::string_view name);

struct PartitionSpec {
  PartitionScheme scheme = PartitionScheme::UniformIID;
  std::size_t clients = 10;
  double power_law_exponent = 1.0;
};

/// Splits the columns of `x` into non-empty shards with weights N_p / N.
/// The two-class schemes need labels; the others carry them along if given.
std::vector<DataShard> partition(const Matrix& x, const std::vector<int>& labels,
                                 const PartitionSpec& spec, Rng& rng);

// Matrix files --------------------------------------------------------------

class FormatError : public std::runtime_error {
 public:
  enum class Kind { MalformedHeader, DimensionOverflow, TruncatedPayload, Io };
  FormatError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

struct LabelledMatrix {
  Matrix x;
  std::vector<int> labels;  // empty when the file has none
};

/// Binary layout (little-endian): magic "FMC1", u32 M, u32 N, u8 has_labels,
/// M*N f64 in column-major order, then N u32 labels when has_labels is 1.
/// Files ending in ".csv" use the text variant: a first line "M,N,has_labels",
/// then M rows of N comma-separated values, then one row of N labels.
void save_matrix(const std::filesystem::path& path, const Matrix& x,
                 const std::vector<int>& labels = {});
LabelledMatrix load_matrix(const std::filesystem::path& path);

void save_matrix_binary(const std::filesystem::path& path, const Matrix& x,
                        const std::vector<int>& labels);
LabelledMatrix load_matrix_binary(const std::filesystem::path& path);
void save_matrix_csv(const std::filesystem::path& path, const Matrix& x,
                     const std::vector<int>& labels);
LabelledMatrix load_matrix_csv(const std::filesystem::path& path);

}  // namespace fedclust

#endif  // FEDCLUST_DATA_HPP
