#pragma once

#include <string>
#include <utility>
#include <vector>

#include "dscl/tensor.hpp"

namespace dscl {

// Binary ground-truth eye fixations: a list of (row, col) points on an
// H x W grid. Duplicates collapse, out-of-bounds points are rejected.
struct FixationMap {
  int rows = 0;
  int cols = 0;
  std::vector<std::pair<int, int>> points;  // sorted, unique

  static FixationMap from_points(int rows, int cols,
                                 std::vector<std::pair<int, int>> pts);
  static FixationMap from_grid(const Tensor<double>& grid, double thresh = 0.5);

  Tensor<double> to_grid() const;  // H x W x 1, entries 0/1
  bool contains(int r, int c) const;
  int count() const { return int(points.size()); }
};

// sigma rule shared with the predict-time blur: 0.035 * min(P, Q)
double default_density_sigma(int rows, int cols);

// Mean of the standardized (population mean/stddev) saliency values at the
// fixated pixels.
double nss(const Tensor<double>& sal, const FixationMap& fix);

// Pearson correlation between saliency map and density map, population
// statistics over all pixels.
double cc(const Tensor<double>& sal, const Tensor<double>& density);

// Gaussian-blurred fixation grid, max-normalized to 1.
Tensor<double> fixation_density(const FixationMap& fix, double sigma);

// ROC area with fixated pixels as positives and every other pixel as
// negatives; thresholds sweep the distinct saliency values at fixations
// (Judd convention), ties classify as salient, trapezoidal area.
double auc_judd(const Tensor<double>& sal, const FixationMap& fix);

// Same threshold convention against an explicit negative sample (repeats
// allowed; sAUC pools keep multiplicity so the empirical center bias of
// the negatives is preserved).
double auc_with_negatives(const Tensor<double>& sal, const FixationMap& fix,
                          const std::vector<std::pair<int, int>>& negatives);

// Other images' fixation locations, minus points coinciding with the
// positives.
std::vector<std::pair<int, int>> sauc_negative_pool(
    const FixationMap& fix, const std::vector<FixationMap>& others);

// Deterministic without-replacement sample of n pool indices for one split.
std::vector<int> sauc_sample_indices(int pool_size, int n, uint64_t seed,
                                     int split);

// Shuffled AUC: mean over `splits` seeded negative subsamples (each the
// size of the positive set) drawn from the pooled other-image fixations.
double sauc(const Tensor<double>& sal, const FixationMap& fix,
            const std::vector<FixationMap>& others, int splits, uint64_t seed);

// ---- fixation file formats -------------------------------------------------

// CSV lines "row,col" (0-based); '#' lines are ignored.
std::vector<std::pair<int, int>> load_fixation_points_csv(const std::string& path);
FixationMap load_fixations_csv(const std::string& path, int rows, int cols);
void save_fixations_csv(const std::string& path, const FixationMap& fix);

}  // namespace dscl
