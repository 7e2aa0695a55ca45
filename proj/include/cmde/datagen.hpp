#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "cmde/numerics.hpp"

namespace cmde {

struct Dataset {
  DenseMatrix x;                              // N x D
  std::vector<std::size_t> modality_blocks;   // empty: a single block
  std::size_t treatments = 2;
  std::vector<int> t;
  std::vector<double> y;
  std::optional<std::vector<double>> y0, y1, mu0, mu1, propensity;

  std::size_t size() const noexcept { return t.size(); }
  std::size_t dim() const noexcept { return x.cols(); }
};

// Throws kEmptyDataset, kDimensionMismatch on ragged columns, kNonBinaryTreatment
// (binary data) or kSchemaError (multi-arm data) on out-of-range treatments.
void validate(const Dataset& data);

// Factual outcome y_i recorded in arm t_i agrees with y0 / y1 whenever present.
bool factual_consistent(const Dataset& data);

Dataset generate_synthetic(SeededRng& rng, std::size_t n);

// Sparse coefficient: value at position `index` of the target vector.
struct SparseEntry {
  std::size_t index;
  double value;
};

struct RandomizedAssignment {
  double p1 = 0.5;
};

struct PropensityAssignment {
  std::vector<double> beta_t;  // length d_dim + im_dim, applied to [X_d, X_im]
  double p2 = 0.1;
};

// Tabular block X_d ~ N(0, I); category block X_im is one-hot over im_dim
// categories drawn uniformly.
struct SemiSynthSpec {
  std::size_t d_dim = 4;
  std::size_t im_dim = 3;
  double beta0 = 0.0;
  std::vector<SparseEntry> beta1;    // over X_d
  std::vector<SparseEntry> beta2;    // over X_im
  std::vector<SparseEntry> beta3;    // over X_d (x) X_d, index i * d_dim + j
  std::vector<SparseEntry> beta_t1;  // over X_im
  std::vector<SparseEntry> beta_t2;  // over X_d (x) X_im, index i * im_dim + k
  double noise_variance = 0.1;
  std::variant<RandomizedAssignment, PropensityAssignment> assignment = RandomizedAssignment{};
};

inline constexpr double kPropensityClamp = 1e-3;

// Throws kSpecMismatch for out-of-range sparse indices or assignment parameters.
void validate(const SemiSynthSpec& spec);

// Shipped default preset; the values are this library's own choice.
SemiSynthSpec clinical_preset();

Dataset generate_semisynthetic(SeededRng& rng, std::size_t n, const SemiSynthSpec& spec);

// CSV with header x_0..x_{D-1},t,y[,y0,y1,mu0,mu1,propensity]; modality blocks
// and the treatment count live in the sidecar `<path>.meta.json`.
void write_dataset(const Dataset& data, const std::string& path);
Dataset read_dataset(const std::string& path);

}  // namespace cmde
